"""
Modulus functions r (near 0) and rho (near infinity), their condition
checkers, and the Lyapunov family Phi_delta built on top of them.

Every checker returns graded evidence (Pass / Fail / Inconclusive) on a
fixed, versioned probe schedule. Nothing here claims a proof.
"""

import logging
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from verdicts import Verdict

logger = logging.getLogger(__name__)

# Probe schedule v1: s_k = c0 * 2**-k (k = 0..60) near zero, K * 2**k near infinity
PROBE_SCHEDULE_VERSION = "v1"
PROBE_COUNT = 61
TAIL_PROBES = 20
GROWTH_TAIL_PROBES = 10
GROWTH_FACTOR = 10.0

TOL_POS = 1e-6
TOL_RATIO = 0.05
TOL_DIV = 1e-3
GEOMETRIC_DECAY = 0.9
DIVERGENCE_DECADES = 12
DIVERGENCE_FROM = 6

QUAD_REL_TOL = 1e-10
QUAD_LIMIT = 200
C2_SAFETY = 1.05
DEBUG_DIFF_TOL = 1e-4

EVIDENCE_NOTE = "numerical evidence, not proof"

# Gauss-Legendre rule for the last cell of the cached phi grid
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)
_PHI_CHUNK = 1 << 16


class ModulusFamily(str, Enum):
    CONSTANT = "constant"
    LOG = "log"
    LOGLOG = "loglog"
    POWER = "power"
    TABULATED = "tabulated"


class Side(str, Enum):
    ZERO = "zero"
    INFINITY = "infinity"


class ConditionId(str, Enum):
    R_I = "R_i"
    R_II = "R_ii"
    R_III = "R_iii"
    RHO_I = "Rho_i"
    RHO_II = "Rho_ii"
    RHO_III = "Rho_iii"


class ModulusDomainError(ValueError):
    """Raised when a modulus is evaluated outside the interval it lives on."""

    def __init__(self, s: float, message: str):
        super().__init__(f"{message} (s={s!r})")
        self.s = s


DEFAULT_C0 = {
    ModulusFamily.LOG: 0.1,
    ModulusFamily.LOGLOG: 0.05,
}
DEFAULT_K_DOM = {
    ModulusFamily.LOG: math.e,
    ModulusFamily.LOGLOG: math.e ** 2,
}


@dataclass(frozen=True)
class ModulusSpec:
    """
    A strictly positive C^1 function on (0, c0] (side=zero) or on
    [c0, inf) (side=infinity, where c0 plays the role of K).

    Built-in closed forms, with L = log(1/s) near zero and L = log(s) near
    infinity: constant c, L, L*log(L), s**p. Tabulated moduli interpolate
    with a monotone cubic on the table and difference their derivative.
    Below the first knot s0 they continue linearly in log(s) with slope
    min(s0 * r'(s0), 0), so r never drops below r(s0) towards zero. That
    tail models the table rather than extending data: verdicts deep below
    s0 are only as good as the table's last decade.
    """

    family: ModulusFamily
    c0: float
    param: Optional[float] = None
    side: Side = Side.ZERO
    table: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None

    def __post_init__(self):
        if not (self.c0 > 0 and math.isfinite(self.c0)):
            raise ValueError(f"c0 must be positive and finite, got {self.c0}")
        if self.family in (ModulusFamily.CONSTANT, ModulusFamily.POWER) and self.param is None:
            raise ValueError(f"{self.family.value} modulus needs a parameter")
        if self.family is ModulusFamily.CONSTANT and not self.param > 0:
            raise ValueError(f"constant modulus must be positive, got {self.param}")
        if self.family is ModulusFamily.TABULATED:
            if self.table is None:
                raise ValueError("tabulated modulus needs a (s, r) table")
            s, r = (np.asarray(col, dtype=float) for col in self.table)
            if s.shape != r.shape or s.size < 3:
                raise ValueError("tabulated modulus needs matching s/r columns of length >= 3")
            if np.any(np.diff(s) <= 0) or np.any(r <= 0):
                raise ValueError("tabulated s must be strictly increasing and r strictly positive")

    # --- constructors -------------------------------------------------

    @classmethod
    def constant(cls, c: float, c0: float = 0.1, side: Side = Side.ZERO) -> "ModulusSpec":
        return cls(ModulusFamily.CONSTANT, c0, param=float(c), side=side)

    @classmethod
    def log(cls, c0: Optional[float] = None, side: Side = Side.ZERO) -> "ModulusSpec":
        return cls(ModulusFamily.LOG, c0 or _default_c0(ModulusFamily.LOG, side), side=side)

    @classmethod
    def loglog(cls, c0: Optional[float] = None, side: Side = Side.ZERO) -> "ModulusSpec":
        return cls(ModulusFamily.LOGLOG, c0 or _default_c0(ModulusFamily.LOGLOG, side), side=side)

    @classmethod
    def power(cls, p: float, c0: float = 0.1, side: Side = Side.ZERO) -> "ModulusSpec":
        return cls(ModulusFamily.POWER, c0, param=float(p), side=side)

    @classmethod
    def tabulated(cls, s: Sequence[float], r: Sequence[float]) -> "ModulusSpec":
        s = tuple(float(v) for v in s)
        r = tuple(float(v) for v in r)
        return cls(ModulusFamily.TABULATED, s[-1], table=(s, r))

    # --- evaluation ---------------------------------------------------

    @property
    def k_dom(self) -> float:
        """Lower end K of [K, inf) for moduli living at infinity."""
        return self.c0

    @cached_property
    def _interp(self) -> PchipInterpolator:
        s, r = self.table
        return PchipInterpolator(np.asarray(s), np.asarray(r), extrapolate=False)

    @cached_property
    def _tail_slope(self) -> float:
        """dr/dlog(s) of the continuation below the table; never positive."""
        s0 = self.table[0][0]
        return min(0.0, s0 * float(self._interp(s0, 1)))

    def _tabulated(self, s):
        s0, r0 = self.table[0][0], self.table[1][0]
        tail = r0 + self._tail_slope * (np.log(s) - math.log(s0))
        return np.where(s < s0, tail, self._interp(np.maximum(s, s0)))

    def _outside(self, s: np.ndarray) -> np.ndarray:
        if self.family is ModulusFamily.TABULATED:
            return (s <= 0.0) | (s > self.table[0][-1])
        if self.side is Side.ZERO:
            return (s <= 0.0) | (s > self.c0 * (1.0 + 1e-12))
        return s < self.c0 * (1.0 - 1e-12)

    def in_domain(self, s: float) -> bool:
        return not bool(self._outside(np.asarray(s, dtype=float)))

    def _closed_form(self, s):
        fam = self.family
        if fam is ModulusFamily.CONSTANT:
            return np.full_like(s, self.param) if isinstance(s, np.ndarray) else self.param
        if fam is ModulusFamily.POWER:
            return s ** self.param
        if fam is ModulusFamily.TABULATED:
            return self._tabulated(s)
        L = -np.log(s) if self.side is Side.ZERO else np.log(s)
        if fam is ModulusFamily.LOG:
            return L
        return L * np.log(L)

    def eval(self, s):
        """r(s) for a scalar or an array; raises ModulusDomainError off the domain."""
        arr = np.asarray(s, dtype=float)
        with np.errstate(all="ignore"):
            value = np.asarray(self._closed_form(arr), dtype=float)
        outside = self._outside(arr)
        if np.any(outside):
            offender = float(arr.flat[np.argmax(outside)])
            raise ModulusDomainError(offender, f"outside the {self.side.value}-side domain")
        bad = ~(np.isfinite(value) & (value > 0))
        if np.any(bad):
            offender = float(arr.flat[np.argmax(bad)])
            raise ModulusDomainError(offender, f"{self.family.value} modulus undefined or non-positive")
        return float(value) if arr.ndim == 0 else value

    def deriv(self, s):
        """r'(s): analytic for built-ins, central difference for tabulated moduli."""
        self.eval(s)
        arr = np.asarray(s, dtype=float)
        fam = self.family
        if fam is ModulusFamily.TABULATED:
            out = np.array([self._differenced(float(v)) for v in np.atleast_1d(arr)])
            return float(out[0]) if arr.ndim == 0 else out
        sign = -1.0 if self.side is Side.ZERO else 1.0
        with np.errstate(all="ignore"):
            if fam is ModulusFamily.CONSTANT:
                out = np.zeros_like(arr)
            elif fam is ModulusFamily.POWER:
                out = self.param * arr ** (self.param - 1.0)
            elif fam is ModulusFamily.LOG:
                out = sign / arr
            else:
                L = sign * np.log(arr)
                out = sign * (np.log(L) + 1.0) / arr
        return float(out) if arr.ndim == 0 else out

    def _differenced(self, s: float) -> float:
        lo, hi = self.table[0][0], self.table[0][-1]
        if s < lo:
            return self._tail_slope / s
        h = max(1e-8 * s, 1e-300)
        a, b = max(s - h, lo), min(s + h, hi)
        return (float(self._interp(b)) - float(self._interp(a))) / (b - a)

    # --- probes and constants -----------------------------------------

    def probes(self, count: int = PROBE_COUNT) -> np.ndarray:
        """The fixed geometric probe schedule, ordered towards the limit point."""
        k = np.arange(count, dtype=float)
        if self.side is Side.ZERO:
            return self.c0 * 2.0 ** -k
        return self.c0 * 2.0 ** k

    @cached_property
    def floor_C1(self) -> float:
        """C1 with r(s) >= 1/C1 on the probe grid."""
        values = self.eval(self.probes())
        return float(1.0 / np.min(values))

    def to_dict(self) -> Dict:
        out = {"family": self.family.value, "c0": self.c0, "side": self.side.value}
        if self.param is not None:
            out["param"] = self.param
        if self.table is not None:
            out["table"] = {"s": list(self.table[0]), "r": list(self.table[1])}
        return out


def _default_c0(family: ModulusFamily, side: Side) -> float:
    if side is Side.ZERO:
        return DEFAULT_C0.get(family, 0.1)
    return DEFAULT_K_DOM.get(family, 1.0)


# ---------------------------------------------------------------------
# condition checkers
# ---------------------------------------------------------------------


@dataclass
class ConditionReport:
    condition_id: ConditionId
    verdict: Verdict
    evidence: List[Tuple[float, float]]
    summary: float
    note: str = EVIDENCE_NOTE
    schedule: str = PROBE_SCHEDULE_VERSION

    def to_dict(self) -> Dict:
        return {
            "condition_id": self.condition_id.value,
            "verdict": self.verdict.value,
            "summary": self.summary,
            "evidence": [{"s": s, "value": v} for s, v in self.evidence],
            "note": self.note,
            "schedule": self.schedule,
        }


def _inconclusive(cid: ConditionId, evidence, s: float, why: str) -> ConditionReport:
    logger.debug(f"{cid.value}: inconclusive at s={s:g}: {why}")
    return ConditionReport(cid, Verdict.INCONCLUSIVE, evidence + [(s, math.nan)], math.nan,
                           note=f"{EVIDENCE_NOTE}; {why}")


def check_liminf_positive(r: ModulusSpec, probes: Optional[np.ndarray] = None,
                          tol_pos: float = TOL_POS) -> ConditionReport:
    """Condition (i): liminf_{s->0} r(s) > 0, judged on the 20 smallest probes."""
    probes = r.probes() if probes is None else np.asarray(probes, dtype=float)
    evidence: List[Tuple[float, float]] = []
    for s in probes:
        try:
            evidence.append((float(s), r.eval(float(s))))
        except ModulusDomainError as e:
            return _inconclusive(ConditionId.R_I, evidence, float(s), str(e))
    tail = evidence[-TAIL_PROBES:]
    running_min = min(v for _, v in tail)
    verdict = Verdict.PASS if running_min >= tol_pos else Verdict.FAIL
    return ConditionReport(ConditionId.R_I, verdict, tail, running_min)


def _ratio_report(r: ModulusSpec, probes: np.ndarray, cid: ConditionId, tol_ratio: float) -> ConditionReport:
    """|s r'(s)/r(s)| must shrink monotonically along the tail and end below tol_ratio."""
    evidence: List[Tuple[float, float]] = []
    for s in probes:
        s = float(s)
        try:
            value = r.eval(s)
            slope = r.deriv(s)
        except ModulusDomainError as e:
            return _inconclusive(cid, evidence, s, str(e))
        if abs(value) < 1e-300:
            return _inconclusive(cid, evidence, s, "r(s) too close to zero for the ratio")
        evidence.append((s, abs(s * slope / value)))
    tail = [v for _, v in evidence[-TAIL_PROBES:]]
    monotone = all(b <= a * (1.0 + 1e-9) + 1e-15 for a, b in zip(tail, tail[1:]))
    last = tail[-1]
    if last > tol_ratio:
        verdict = Verdict.FAIL
    elif monotone:
        verdict = Verdict.PASS
    else:
        verdict = Verdict.INCONCLUSIVE
    return ConditionReport(cid, verdict, evidence[-TAIL_PROBES:], last)


def check_slope_ratio(r: ModulusSpec, probes: Optional[np.ndarray] = None,
                      tol_ratio: float = TOL_RATIO) -> ConditionReport:
    """Condition (ii): lim_{s->0} s r'(s) / r(s) = 0."""
    probes = r.probes() if probes is None else np.asarray(probes, dtype=float)
    return _ratio_report(r, probes, ConditionId.R_II, tol_ratio)


def _quad(fn, a: float, b: float, rel_tol: float = QUAD_REL_TOL) -> Tuple[float, bool]:
    """scipy quad with convergence reported instead of warned."""
    result = integrate.quad(fn, a, b, epsabs=0.0, epsrel=rel_tol, limit=QUAD_LIMIT, full_output=1)
    value = result[0]
    converged = len(result) == 3 and math.isfinite(value)
    if not converged:
        logger.warning(f"quadrature did not converge on [{a:g}, {b:g}]: {result[-1] if len(result) > 3 else value}")
    return value, converged


def _divergence_report(cid: ConditionId, edges: np.ndarray, integrand_u, tol_div: float) -> ConditionReport:
    """
    Partial integrals over successive decades in u = log s. Pass when the
    late increments stay above tol_div, Fail when they decay geometrically.
    """
    evidence: List[Tuple[float, float]] = []
    increments: List[float] = []
    total = 0.0
    for lo, hi in zip(edges, edges[1:]):
        a, b = sorted((math.log(lo), math.log(hi)))
        try:
            piece, ok = _quad(integrand_u, a, b, rel_tol=1e-8)
        except ModulusDomainError as e:
            return _inconclusive(cid, evidence, float(hi), str(e))
        if not ok:
            return _inconclusive(cid, evidence, float(hi), "quadrature non-convergence")
        total += piece
        increments.append(piece)
        evidence.append((float(hi), total))
    # increments[m] is I(t_{m+1}) - I(t_m); judged for m >= DIVERGENCE_FROM
    late = increments[DIVERGENCE_FROM:]
    summary = min(late)
    if summary >= tol_div:
        verdict = Verdict.PASS
    elif all(b <= GEOMETRIC_DECAY * a for a, b in zip(late, late[1:])):
        verdict = Verdict.FAIL
    else:
        verdict = Verdict.INCONCLUSIVE
    return ConditionReport(cid, verdict, evidence, summary)


def check_integral_divergence(r: ModulusSpec, decades: int = DIVERGENCE_DECADES,
                              tol_div: float = TOL_DIV) -> ConditionReport:
    """Condition (iii): I(t) = int_t^c0 ds/(s r(s)) grows without bound as t -> 0."""
    edges = r.c0 * 10.0 ** -np.arange(0, decades + 1, dtype=float)

    def integrand(u):
        return 1.0 / r.eval(math.exp(u))

    return _divergence_report(ConditionId.R_III, edges, integrand, tol_div)


def check_growth_conditions(rho: ModulusSpec, tol_ratio: float = TOL_RATIO,
                            tol_div: float = TOL_DIV,
                            decades: int = DIVERGENCE_DECADES) -> List[ConditionReport]:
    """Conditions (i)-(iii) on rho at infinity (the non-explosion criterion)."""
    if rho.side is not Side.INFINITY:
        raise ValueError("growth conditions need a modulus living at infinity")
    probes = rho.probes()
    reports = [_unbounded_report(rho, probes), _ratio_report(rho, probes, ConditionId.RHO_II, tol_ratio)]

    edges = rho.k_dom * 10.0 ** np.arange(0, decades + 1, dtype=float)

    def integrand(u):
        s = math.exp(u)
        return 1.0 / (rho.eval(s) + 1.0 / s)

    reports.append(_divergence_report(ConditionId.RHO_III, edges, integrand, tol_div))
    return reports


def _unbounded_report(rho: ModulusSpec, probes: np.ndarray) -> ConditionReport:
    evidence: List[Tuple[float, float]] = []
    for s in probes:
        try:
            evidence.append((float(s), rho.eval(float(s))))
        except ModulusDomainError as e:
            return _inconclusive(ConditionId.RHO_I, evidence, float(s), str(e))
    first = evidence[0][1]
    tail = [v for _, v in evidence[-GROWTH_TAIL_PROBES:]]
    increasing = all(b > a for a, b in zip(tail, tail[1:]))
    if not increasing:
        verdict = Verdict.FAIL
    elif tail[0] > GROWTH_FACTOR * first:
        verdict = Verdict.PASS
    else:
        verdict = Verdict.INCONCLUSIVE
    return ConditionReport(ConditionId.RHO_I, verdict, evidence[-GROWTH_TAIL_PROBES:], tail[-1] / first)


# ---------------------------------------------------------------------
# Lyapunov family
# ---------------------------------------------------------------------


@dataclass
class PhiFamily:
    """
    phi_delta(z) = int_0^z ds / (s r(s) + delta) and Phi_delta = exp(phi_delta).

    phi is tabulated once on a geometric grid over (0, c0] (the cache);
    point values add an adaptive-quadrature remainder on the last cell.
    The cache is built under a lock and never mutated afterwards.
    """

    modulus: ModulusSpec
    delta: float
    quad_rel_tol: float = QUAD_REL_TOL
    cells_per_decade: int = 8
    debug: bool = False
    _nodes: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _cum: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.modulus.side is not Side.ZERO:
            raise ValueError("Phi_delta needs a modulus on (0, c0]")

    @property
    def c0(self) -> float:
        return self.modulus.c0

    def _integrand(self, s: float) -> float:
        if s <= 0.0:
            return 1.0 / self.delta
        return 1.0 / (s * self.modulus.eval(s) + self.delta)

    def _check_zeta(self, zeta: float) -> float:
        zeta = float(zeta)
        if not zeta >= 0.0:
            raise ValueError(f"zeta must be non-negative, got {zeta}")
        if zeta > self.c0 * (1.0 + 1e-12):
            raise ModulusDomainError(zeta, f"zeta beyond the modulus domain (0, {self.c0}]")
        return min(zeta, self.c0)

    def _ensure_cache(self):
        if self._nodes is not None:
            return
        with self._lock:
            if self._nodes is not None:
                return
            s_lo = min(self.c0, self.delta) * 1e-14
            decades = math.log10(self.c0 / s_lo)
            count = int(math.ceil(decades * self.cells_per_decade)) + 1
            nodes = np.concatenate([[0.0], np.geomspace(s_lo, self.c0, count)])
            nodes[-1] = self.c0
            pieces = []
            for a, b in zip(nodes, nodes[1:]):
                piece, _ = _quad(self._integrand, float(a), float(b), self.quad_rel_tol)
                pieces.append(piece)
            cum = np.concatenate([[0.0], np.cumsum(pieces)])
            logger.debug(f"phi cache built: delta={self.delta:g}, {len(nodes)} nodes, phi(c0)={cum[-1]:.6g}")
            self._cum = cum
            self._nodes = nodes

    @property
    def cache(self) -> List[Tuple[float, float]]:
        """The monotone (zeta, phi_delta(zeta)) grid."""
        self._ensure_cache()
        return list(zip(self._nodes.tolist(), self._cum.tolist()))

    def phi(self, zeta: float) -> float:
        zeta = self._check_zeta(zeta)
        if zeta == 0.0:
            return 0.0
        self._ensure_cache()
        j = int(np.searchsorted(self._nodes, zeta, side="right")) - 1
        a = float(self._nodes[j])
        if a == zeta:
            return float(self._cum[j])
        rest, _ = _quad(self._integrand, a, zeta, self.quad_rel_tol)
        return float(self._cum[j]) + rest

    def phi_many(self, zetas) -> np.ndarray:
        """Vectorised phi over any array shape; zeros map to exactly 0."""
        z = np.asarray(zetas, dtype=float)
        if np.any(~(z >= 0.0)):
            raise ValueError("zeta must be non-negative")
        if np.any(z > self.c0 * (1.0 + 1e-12)):
            raise ModulusDomainError(float(z.max()), f"zeta beyond the modulus domain (0, {self.c0}]")
        self._ensure_cache()
        flat = np.minimum(z.ravel(), self.c0)
        out = np.zeros_like(flat)
        for start in range(0, flat.size, _PHI_CHUNK):
            chunk = flat[start:start + _PHI_CHUNK]
            j = np.searchsorted(self._nodes, chunk, side="right") - 1
            a = self._nodes[j]
            half = 0.5 * (chunk - a)
            s = a[:, None] + half[:, None] * (_GL_NODES[None, :] + 1.0)
            with np.errstate(all="ignore"):
                sr = np.where(s > 0, s * self.modulus.eval(np.where(s > 0, s, self.c0)), 0.0)
            # row-wise sum rather than gemv: a value must not depend on its chunk neighbours
            rest = half * np.sum(_GL_WEIGHTS / (sr + self.delta), axis=1)
            out[start:start + _PHI_CHUNK] = np.where(chunk > 0, self._cum[j] + rest, 0.0)
        return out.reshape(z.shape)

    def _s_r(self, zeta: float) -> float:
        return 0.0 if zeta == 0.0 else zeta * self.modulus.eval(zeta)

    def Phi(self, zeta: float) -> float:
        return math.exp(self.phi(zeta))

    def Phi_prime(self, zeta: float) -> float:
        zeta = self._check_zeta(zeta)
        value = self.Phi(zeta) / (self._s_r(zeta) + self.delta)
        if self.debug and zeta > 0.0:
            self._cross_check(zeta, value)
        return value

    def Phi_second(self, zeta: float) -> float:
        zeta = self._check_zeta(zeta)
        r = self.modulus.eval(zeta)
        slope = self.modulus.deriv(zeta)
        return (1.0 - r - zeta * slope) / (zeta * r + self.delta) ** 2 * self.Phi(zeta)

    def _cross_check(self, zeta: float, closed_form: float):
        # Phi(hi) - Phi(lo) = Phi(lo) * expm1(phi(hi) - phi(lo)), the phi step integrated directly
        h = 1e-5 * zeta
        hi = min(zeta + h, self.c0)
        lo = zeta - h
        step, _ = _quad(self._integrand, lo, hi, self.quad_rel_tol)
        diff = self.Phi(lo) * math.expm1(step) / (hi - lo)
        if abs(diff - closed_form) > DEBUG_DIFF_TOL * abs(closed_form):
            logger.error(f"Phi' mismatch at zeta={zeta:g}: closed form {closed_form:.12g}, difference {diff:.12g}")
            raise ValueError(f"Phi' closed form disagrees with central difference at zeta={zeta:g}")


def phi_delta(fam: PhiFamily, zeta: float) -> float:
    return fam.phi(zeta)


def phi_delta_many(fam: PhiFamily, zetas) -> np.ndarray:
    return fam.phi_many(zetas)


def Phi(fam: PhiFamily, zeta: float) -> float:
    return fam.Phi(zeta)


def Phi_prime(fam: PhiFamily, zeta: float) -> float:
    return fam.Phi_prime(zeta)


def Phi_second(fam: PhiFamily, zeta: float) -> float:
    return fam.Phi_second(zeta)


def estimate_C2(r: ModulusSpec, probes: Optional[np.ndarray] = None) -> float:
    """C2 with |1 - r - z r'| <= C2 r on the probes, inflated by 5%."""
    probes = r.probes() if probes is None else np.asarray(probes, dtype=float)
    values = r.eval(probes)
    slopes = r.deriv(probes)
    ratio = np.abs(1.0 - values - probes * slopes) / values
    return float(C2_SAFETY * np.max(ratio))


@dataclass
class BoundAudit:
    """Outcome of checking Phi'' <= C2 Phi r / (z r + delta)^2 on a grid."""

    verdict: Verdict
    C2: float
    worst_slack: float
    worst_zeta: float
    violations: List[Dict[str, float]]
    hypotheses: List[ConditionReport]

    @property
    def flagged(self) -> bool:
        return self.verdict is not Verdict.PASS or any(h.verdict is not Verdict.PASS for h in self.hypotheses)

    def to_dict(self) -> Dict:
        return {
            "verdict": self.verdict.value,
            "flagged": self.flagged,
            "C2": self.C2,
            "worst_slack": self.worst_slack,
            "worst_zeta": self.worst_zeta,
            "violations": self.violations,
            "hypotheses": [h.to_dict() for h in self.hypotheses],
        }


def phi_bound_audit(fam: PhiFamily, grid: Sequence[float], C2: Optional[float] = None) -> BoundAudit:
    """
    Assert the second-derivative bound at every grid point. The report also
    carries conditions (i) and (ii) on r, whose failure flags the audit
    even when the inequality happens to hold.
    """
    r = fam.modulus
    C2 = estimate_C2(r) if C2 is None else C2
    worst_slack, worst_zeta = math.inf, math.nan
    violations = []
    for zeta in grid:
        zeta = float(zeta)
        lhs = fam.Phi_second(zeta)
        r_z = r.eval(zeta)
        rhs = C2 * fam.Phi(zeta) * r_z / (zeta * r_z + fam.delta) ** 2
        slack = rhs - lhs
        if slack < worst_slack:
            worst_slack, worst_zeta = slack, zeta
        if slack < -1e-12 * max(abs(rhs), abs(lhs), 1.0):
            violations.append({"zeta": zeta, "lhs": lhs, "rhs": rhs, "r": r_z, "r_prime": r.deriv(zeta)})
    verdict = Verdict.FAIL if violations else Verdict.PASS
    if violations:
        logger.warning(f"Phi'' bound violated at {len(violations)} of {len(grid)} points (delta={fam.delta:g})")
    hypotheses = [check_liminf_positive(r), check_slope_ratio(r)]
    return BoundAudit(verdict, C2, worst_slack, worst_zeta, violations, hypotheses)


@dataclass
class DivergenceSweep:
    zeta: float
    deltas: List[float]
    values: List[float]

    @property
    def increasing(self) -> bool:
        return all(b > a for a, b in zip(self.values, self.values[1:]))


def phi_divergence_sweep(r: ModulusSpec, zeta: float,
                         deltas: Sequence[float] = tuple(10.0 ** -k for k in range(1, 9))) -> DivergenceSweep:
    """Phi_delta(zeta) along a decreasing delta sweep: the witness of Phi_0(zeta) = +inf."""
    values = [PhiFamily(r, float(d)).Phi(zeta) for d in deltas]
    return DivergenceSweep(float(zeta), [float(d) for d in deltas], values)
