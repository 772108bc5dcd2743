"""
Quantitative shadows of the pathwise-uniqueness argument: stopping times,
the eta-bound audit, the Gronwall constant and envelope, trap and
martingale facts, one cascade stage after a trap, and the explosion
dichotomy.

Every statistic over paths is reduced over all paths at once, in path
order, so a fixed seed gives identical reports regardless of the worker
count or the batch size.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from coefficients import CoefficientModel, verify_extended_lipschitz, verify_growth_bound, GrowthReport
from modulus import ModulusSpec, PhiFamily, estimate_C2
from sde_engine import (CoupledBatch, CoupledRun, SimConfig, TrajectoryBatch, batch_size_for, map_paths,
                        simulate_batch, simulate_coupled_batch)
from verdicts import Verdict, fold

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.1
DEFAULT_DELTA = 0.01
C_INFLATION = 1.1
REESTIMATE_FACTOR = 10
GRONWALL_SE = 3.0
MARTINGALE_SE = 4.0
MAX_EXCLUDED = 0.01
MAX_VIOLATION_RECORDS = 20
DEFAULT_GAPS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
STOPPING_NOTE = "stopping times resolved on the recorded grid; no sub-step crossing refinement"


@dataclass(frozen=True)
class StoppingBand:
    """
    Band [eps, 1/eps] for the active components J (0-based indices). Components
    in cap_only are only stopped by x >= 1/eps or by their f leaving the band.
    """

    epsilon: float
    active: Tuple[int, ...]
    cap_only: Tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1) so that eps < 1/eps, got {self.epsilon}")
        if not self.active:
            raise ValueError("the active index set J must be non-empty")
        if set(self.active) & set(self.cap_only):
            raise ValueError("an index cannot be both active and cap-only")

    @classmethod
    def full(cls, d: int, epsilon: float = DEFAULT_EPSILON) -> "StoppingBand":
        return cls(epsilon, tuple(range(d)))

    def to_dict(self) -> Dict:
        return {"epsilon": self.epsilon, "active": list(self.active), "cap_only": list(self.cap_only)}


# ---------------------------------------------------------------------
# stopping times
# ---------------------------------------------------------------------


def _first_index(mask: np.ndarray) -> np.ndarray:
    """First True along the last axis; the axis length when there is none."""
    m = mask.shape[-1]
    return np.where(mask.any(axis=-1), mask.argmax(axis=-1), m)


def band_exit_mask(band: StoppingBand, X: np.ndarray, Y: np.ndarray,
                   fX: np.ndarray, fY: np.ndarray) -> np.ndarray:
    """Recorded steps (shape X.shape[:-1]) at which the band is left."""
    eps, cap = band.epsilon, 1.0 / band.epsilon
    J = list(band.active)
    lo = np.minimum(np.minimum(fX[..., J], fY[..., J]), np.minimum(X[..., J], Y[..., J]))
    hi = np.maximum(np.maximum(fX[..., J], fY[..., J]), np.maximum(X[..., J], Y[..., J]))
    out = np.any((lo <= eps) | (hi >= cap), axis=-1)
    if band.cap_only:
        K = list(band.cap_only)
        f_lo = np.minimum(fX[..., K], fY[..., K])
        f_hi = np.maximum(fX[..., K], fY[..., K])
        x_hi = np.maximum(X[..., K], Y[..., K])
        out |= np.any((x_hi >= cap) | (f_lo <= eps) | (f_hi >= cap), axis=-1)
    return out


def _band_index(band: StoppingBand, model: CoefficientModel, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return _first_index(band_exit_mask(band, X, Y, model._f(X), model._f(Y)))


def _index_to_time(times: np.ndarray, idx: int) -> Optional[float]:
    return None if idx >= times.size else float(times[idx])


def tau_eps_index(run: CoupledRun, model: CoefficientModel, band: StoppingBand) -> Optional[int]:
    idx = int(_band_index(band, model, run.x.states, run.y.states))
    return None if idx >= run.times.size else idx


def detect_tau_eps(run: CoupledRun, model: CoefficientModel, band: StoppingBand) -> Optional[float]:
    """First recorded time at which some band quantity leaves [eps, 1/eps]."""
    idx = tau_eps_index(run, model, band)
    return None if idx is None else float(run.times[idx])


def tau_c0_index(run: CoupledRun, c0: float) -> Optional[int]:
    idx = int(_first_index(run.zeta >= c0 * c0))
    return None if idx >= run.times.size else idx


def detect_tau_c0(run: CoupledRun, c0: float) -> Optional[float]:
    """First recorded time with zeta >= c0^2."""
    idx = tau_c0_index(run, c0)
    return None if idx is None else float(run.times[idx])


def _stop_indices(batch: CoupledBatch, band: StoppingBand, c0: float) -> np.ndarray:
    """sigma = index of tau ^ tau_eps per path (m when neither fires)."""
    tau = _first_index(batch.zeta >= c0 * c0)
    tau_eps = _band_index(band, batch.model, batch.x.states, batch.y.states)
    return np.minimum(tau, tau_eps)


def _stopped(series: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """series[:, min(j, sigma)] for every recorded j."""
    m = series.shape[1]
    cols = np.minimum(np.arange(m)[None, :], np.minimum(sigma, m - 1)[:, None])
    return np.take_along_axis(series, cols, axis=1)


# ---------------------------------------------------------------------
# eta bound audit
# ---------------------------------------------------------------------


def eta_factor(epsilon: float) -> float:
    """max(1/(2 eps^4), 1/(4 eps^6)), the constant in front of C zeta r(zeta) + zeta."""
    return max(1.0 / (2.0 * epsilon ** 4), 1.0 / (4.0 * epsilon ** 6))


@dataclass
class EtaAudit:
    verdict: Verdict
    C: float
    factor: float
    n_audited: int
    n_violations: int
    worst_slack: float
    required_C: float
    violations: List[Dict] = field(default_factory=list)
    slack_series: Optional[np.ndarray] = None
    attempts: List[Dict] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {"verdict": self.verdict.value, "C": self.C, "factor": self.factor,
                "n_audited": self.n_audited, "n_violations": self.n_violations,
                "worst_slack": self.worst_slack, "required_C": self.required_C,
                "violations": self.violations, "attempts": self.attempts}


def _audit_arrays(times: np.ndarray, X: np.ndarray, Y: np.ndarray, fX: np.ndarray, fY: np.ndarray,
                  sigma: np.ndarray, r: ModulusSpec, C: float, epsilon: float) -> EtaAudit:
    """Audit (eta^i)^2 <= F (C zeta r(zeta) + zeta) on (n, m, d) arrays at steps j < sigma."""
    F = eta_factor(epsilon)
    zeta = np.sum((X - Y) ** 2, axis=-1)
    m = zeta.shape[1]
    audited = (np.arange(m)[None, :] < sigma[:, None]) & (zeta <= r.c0)
    positive = audited & (zeta > 0)
    zr = np.zeros_like(zeta)
    zr[positive] = zeta[positive] * r.eval(zeta[positive])
    bound = F * (C * zr + zeta)
    with np.errstate(invalid="ignore"):
        eta = np.sqrt(np.maximum(fX, 0.0) * X) - np.sqrt(np.maximum(fY, 0.0) * Y)
    eta2 = eta ** 2
    slack = bound[..., None] - eta2
    mask = np.broadcast_to(audited[..., None], slack.shape)
    viol = mask & (slack < -1e-12 * bound[..., None])

    series = np.min(np.where(mask, slack, np.inf), axis=(0, 2))
    series = np.where(np.isfinite(series), series, np.nan)
    worst = float(np.min(slack[mask])) if mask.any() else math.inf

    need = np.where(positive[..., None], (eta2 / F - zeta[..., None]) / np.where(zr > 0, zr, 1.0)[..., None], -np.inf)
    stuck = mask & ~positive[..., None] & (eta2 > 0)
    required = math.inf if stuck.any() else float(max(0.0, np.max(need, initial=0.0)))

    records = []
    for p, j, i in np.argwhere(viol)[:MAX_VIOLATION_RECORDS]:
        records.append({"path": int(p), "t": float(times[j]), "component": int(i),
                        "x": X[p, j].tolist(), "y": Y[p, j].tolist(),
                        "fX": fX[p, j].tolist(), "fY": fY[p, j].tolist(),
                        "zeta": float(zeta[p, j]), "eta2": float(eta2[p, j, i]), "bound": float(bound[p, j])})
    n_viol = int(np.count_nonzero(viol))
    verdict = Verdict.FAIL if n_viol else Verdict.PASS
    return EtaAudit(verdict, C, F, int(np.count_nonzero(audited)), n_viol, worst, required, records, series)


def _merge_audits(audits: List[EtaAudit]) -> EtaAudit:
    first = audits[0]
    series = np.fmin.reduce([a.slack_series for a in audits]) if len(audits) > 1 else first.slack_series
    records = [rec for a in audits for rec in a.violations][:MAX_VIOLATION_RECORDS]
    n_viol = sum(a.n_violations for a in audits)
    return EtaAudit(Verdict.FAIL if n_viol else Verdict.PASS, first.C, first.factor,
                    sum(a.n_audited for a in audits), n_viol,
                    min(a.worst_slack for a in audits), max(a.required_C for a in audits), records, series)


def eta_bound_audit(run: CoupledRun, model: CoefficientModel, r: ModulusSpec, C: float,
                    band: StoppingBand, c0: Optional[float] = None) -> EtaAudit:
    """Audit the eta bound along one coupled run, at recorded steps before tau ^ tau_eps."""
    c0 = r.c0 if c0 is None else c0
    X, Y = run.x.states[None], run.y.states[None]
    sigma = np.minimum(_first_index(run.zeta[None] >= c0 * c0), _band_index(band, model, X, Y))
    return _audit_arrays(run.times, X, Y, model._f(X), model._f(Y), sigma, r, C, band.epsilon)


def eta_bound_audit_batches(batches: List[CoupledBatch], r: ModulusSpec, C: float, band: StoppingBand,
                            c0: float) -> EtaAudit:
    audits = []
    for b in batches:
        sigma = _stop_indices(b, band, c0)
        audits.append(_audit_arrays(b.times, b.x.states, b.y.states, b.model._f(b.x.states),
                                    b.model._f(b.y.states), sigma, r, C, band.epsilon))
    return _merge_audits(audits)


def audit_with_reestimation(audit: Callable[[float], EtaAudit], model: CoefficientModel, r: ModulusSpec,
                            C_hat: float, n_pairs: int, seed: int, box: float) -> EtaAudit:
    """
    Audit with C = 1.1 C_hat; on a violation, re-estimate C with ten times
    the samples and audit once more before reporting failure.
    """
    C = C_INFLATION * C_hat
    result = audit(C)
    attempts = [{"C": C, "n_pairs": n_pairs, "n_violations": result.n_violations}]
    if result.n_violations:
        logger.warning(f"eta audit: {result.n_violations} violations with C={C:.6g}; re-estimating C")
        again = verify_extended_lipschitz(model, r, n_pairs * REESTIMATE_FACTOR, seed + 1, box)
        C = C_INFLATION * max(again.C_hat, C_hat)
        result = audit(C)
        attempts.append({"C": C, "n_pairs": n_pairs * REESTIMATE_FACTOR, "n_violations": result.n_violations})
    result.attempts = attempts
    return result


# ---------------------------------------------------------------------
# Gronwall constant and envelope
# ---------------------------------------------------------------------


def gronwall_constant(alpha_vec: Sequence[float], C: float, C1: float, C2: float, d: int,
                      epsilon: float, cascade: bool = False) -> float:
    """
    K = a C1 + d (C + C1) F + 2 d C1 C2 (C + C1) F with a = 2 max|alpha_i| and
    F = 1/(2 eps^4); the cascade stage uses the wider factor of eta_factor.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if min(C, C1, C2) < 0 or d < 1:
        raise ValueError("C, C1, C2 must be non-negative and d >= 1")
    a = 2.0 * max(abs(x) for x in alpha_vec)
    F = eta_factor(epsilon) if cascade else 1.0 / (2.0 * epsilon ** 4)
    return a * C1 + d * (C + C1) * F + 2.0 * d * C1 * C2 * (C + C1) * F


@dataclass
class GronwallReport:
    K: float
    phi0: float
    t_grid: np.ndarray
    log_means: np.ndarray
    log_se: np.ndarray
    verdicts: List[Verdict]
    verdict: Verdict
    n_paths: int
    stopped_at_zero: int
    clipped: int
    C: float
    C1: float
    C2: float
    audit: Optional[EtaAudit] = None

    @property
    def log_phi0(self) -> float:
        return math.log(self.phi0)

    @property
    def log_bound(self) -> np.ndarray:
        return self.log_phi0 + self.K * self.t_grid

    @property
    def margin(self) -> float:
        """Smallest gap between the bound (plus 3 SE) and the estimate, on the log scale."""
        return float(np.min(self.log_bound + GRONWALL_SE * self.log_se - self.log_means))

    def to_dict(self) -> Dict:
        return {"verdict": self.verdict.value, "K": self.K, "phi0": self.phi0, "margin": self.margin,
                "n_paths": self.n_paths, "stopped_at_zero": self.stopped_at_zero, "clipped": self.clipped,
                "C": self.C, "C1": self.C1, "C2": self.C2, "note": STOPPING_NOTE,
                "eta_audit": None if self.audit is None else self.audit.to_dict()}

    def series(self) -> Tuple[List[str], List[List[float]]]:
        rows = [[t, m, s, b] for t, m, s, b in zip(self.t_grid, self.log_means, self.log_se, self.log_bound)]
        return ["t", "log_mean_phi", "log_se", "log_bound"], rows


def _coupled_batches(model: CoefficientModel, aX, aY, config: SimConfig, n_paths: int) -> List[CoupledBatch]:
    size = batch_size_for(config, model.d, copies=2)
    return map_paths(lambda idx: simulate_coupled_batch(model, aX, aY, config, idx), n_paths, size)


def _log_mean_and_se(phi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """log E[Phi] and its log-scale SE from phi over (paths, times), reduced over all paths at once."""
    n = phi.shape[0]
    lse = logsumexp(phi, axis=0)
    lse2 = logsumexp(2.0 * phi, axis=0)
    log_mean = lse - math.log(n)
    if n < 2:
        return log_mean, np.zeros_like(log_mean)
    ratio = np.exp(lse2 - math.log(n) - 2.0 * log_mean)
    return log_mean, np.sqrt(np.maximum(ratio - 1.0, 0.0) / (n - 1))


def gronwall_experiment(model: CoefficientModel, r: ModulusSpec, aX, gap, delta: float = DEFAULT_DELTA,
                        epsilon: float = DEFAULT_EPSILON, c0: Optional[float] = None,
                        config: Optional[SimConfig] = None, C_hat: Optional[float] = None,
                        lipschitz_pairs: int = 100_000, box: float = 10.0) -> GronwallReport:
    """
    Monte Carlo estimate of E[Phi_delta(zeta_{t ^ tau ^ tau_eps})] on the recorded
    grid, in log space, against Phi_delta(zeta_0) e^{K t}.
    """
    config = config or SimConfig()
    c0 = r.c0 if c0 is None else c0
    aX = np.asarray(aX, dtype=float)
    gap = np.asarray(gap, dtype=float)
    aY = aX + gap
    zeta0 = float(np.sum(gap ** 2))
    if zeta0 > c0 * c0:
        raise ValueError(f"|gap|^2={zeta0:g} exceeds c0^2={c0 * c0:g}")
    band = StoppingBand.full(model.d, epsilon)

    if C_hat is None:
        C_hat = verify_extended_lipschitz(model, r, lipschitz_pairs, config.seed, box).C_hat
    C1 = r.floor_C1
    C2 = estimate_C2(r)
    fam = PhiFamily(r, delta)

    logger.info(f"gronwall: {config.n_paths} coupled paths, zeta0={zeta0:.3g}, eps={epsilon:g}, delta={delta:g}")
    batches = _coupled_batches(model, aX, aY, config, config.n_paths)

    phis, stopped_at_zero, clipped = [], 0, 0
    for b in batches:
        sigma = _stop_indices(b, band, c0)
        stopped_at_zero += int(np.count_nonzero(sigma == 0))
        z = _stopped(b.zeta, sigma)
        clipped += int(np.count_nonzero(z > r.c0))
        phis.append(fam.phi_many(np.minimum(z, r.c0)))
    log_means, log_se = _log_mean_and_se(np.concatenate(phis, axis=0))

    audit = audit_with_reestimation(lambda C: eta_bound_audit_batches(batches, r, C, band, c0),
                                    model, r, C_hat, lipschitz_pairs, config.seed, box)
    C = audit.C
    K = gronwall_constant(model.alpha, C, C1, C2, model.d, epsilon)
    phi0 = math.exp(float(fam.phi_many(zeta0)))
    t_grid = batches[0].times
    log_bound = math.log(phi0) + K * t_grid
    ok = log_means <= log_bound + GRONWALL_SE * log_se + 1e-9
    verdicts = [Verdict.PASS if v else Verdict.FAIL for v in ok]
    if stopped_at_zero == config.n_paths:
        verdict = Verdict.INCONCLUSIVE
        logger.warning("gronwall: every path stopped at time 0; the band is misconfigured")
    else:
        verdict = fold(verdicts)
    logger.info(f"gronwall: K={K:.6g}, verdict {verdict.value}")
    return GronwallReport(K, phi0, t_grid, log_means, log_se, verdicts, verdict, config.n_paths,
                          stopped_at_zero, clipped, C, C1, C2, audit)


# ---------------------------------------------------------------------
# martingale, traps, continuity
# ---------------------------------------------------------------------


@dataclass
class MartingaleReport:
    t: float
    a: List[float]
    means: List[float]
    standard_errors: List[float]
    allowances: List[float]
    n_used: int
    n_excluded: int
    verdict: Verdict
    t_grid: np.ndarray
    grid_means: np.ndarray
    grid_se: np.ndarray

    def to_dict(self) -> Dict:
        return {"verdict": self.verdict.value, "t": self.t, "a": self.a, "means": self.means,
                "standard_errors": self.standard_errors, "allowances": self.allowances,
                "n_used": self.n_used, "n_excluded": self.n_excluded}

    def series(self) -> Tuple[List[str], List[List[float]]]:
        """Discounted means e^{-alpha_i t} X_t^i and their SE on the recorded grid."""
        d = len(self.a)
        header = ["t"] + [f"mean_{i + 1}" for i in range(d)] + [f"se_{i + 1}" for i in range(d)]
        rows = [[t, *m, *s] for t, m, s in zip(self.t_grid, self.grid_means, self.grid_se)]
        return header, rows


def martingale_experiment(model: CoefficientModel, a, t: float, N: int,
                          config: Optional[SimConfig] = None) -> MartingaleReport:
    """
    Sample mean of e^{-alpha_i t} X_t^i against a_i, within 4 SE plus the Euler
    drift allowance. The verdict uses time t; the discounted means are also
    reported on the recorded grid of the base config.
    """
    base = config or SimConfig()
    if t > base.T * (1 + 1e-12):
        raise ValueError(f"t={t} beyond the horizon T={base.T}")
    cfg = SimConfig(dt=base.dt, T=t, M=base.M, seed=base.seed, n_paths=N, record_stride=base.record_stride)
    a = np.asarray(a, dtype=float)
    t_grid = cfg.record_steps * cfg.dt
    discount = np.exp(-t_grid[:, None] * model.alpha_array[None, :])

    def reduce(idx):
        b = simulate_batch(model, a, cfg, idx)
        keep = b.exploded_at < 0
        return b.states[keep] * discount, int(np.count_nonzero(~keep))

    parts = map_paths(reduce, N, batch_size_for(cfg, model.d))
    x = np.concatenate([p[0] for p in parts], axis=0)
    excluded = sum(p[1] for p in parts)
    used = x.shape[0]
    grid_means = x.mean(axis=0) if used else np.full(discount.shape, math.nan)
    if used > 1:
        grid_se = x.std(axis=0, ddof=1) / math.sqrt(used)
    else:
        grid_se = np.zeros_like(discount)
    t_eff = float(t_grid[-1])
    means, se = grid_means[-1], grid_se[-1]
    allowance = np.abs(a) * np.abs((1.0 + model.alpha_array * cfg.dt) ** cfg.n_steps * discount[-1] - 1.0)

    if excluded > MAX_EXCLUDED * N or used == 0:
        verdict = Verdict.INCONCLUSIVE
        logger.warning(f"martingale: {excluded} of {N} paths exploded and were excluded")
    else:
        ok = np.abs(means - a) <= MARTINGALE_SE * se + allowance + 1e-15
        verdict = Verdict.PASS if bool(np.all(ok)) else Verdict.FAIL
    logger.info(f"martingale: means={np.round(means, 6).tolist()} se={np.round(se, 6).tolist()} -> {verdict.value}")
    return MartingaleReport(t_eff, a.tolist(), means.tolist(), se.tolist(), allowance.tolist(), used, excluded,
                            verdict, t_grid, grid_means, grid_se)


@dataclass
class TrapReport:
    verdict: Verdict
    n_paths: int
    path_steps: int
    violations: int
    negatives: int
    frequencies: List[float]

    def to_dict(self) -> Dict:
        return {"verdict": self.verdict.value, "n_paths": self.n_paths, "path_steps": self.path_steps,
                "violations": self.violations, "negatives": self.negatives, "frequencies": self.frequencies}


def trap_audit(batches) -> TrapReport:
    """No positive coordinate after its trap step, no negative coordinate anywhere."""
    if isinstance(batches, TrajectoryBatch):
        batches = [batches]
    n = steps = violations = negatives = 0
    counts = None
    for b in batches:
        after = (b.record_steps[None, :, None] >= b.trapped_at[:, None, :]) & (b.trapped_at[:, None, :] >= 0)
        violations += int(np.count_nonzero(after & (b.states > 0)))
        negatives += int(np.count_nonzero(b.states < 0))
        trapped = np.count_nonzero(b.trapped_at >= 0, axis=0)
        counts = trapped if counts is None else counts + trapped
        n += b.n_paths
        steps += b.n_paths * int(b.record_steps[-1])
    frequencies = (counts / max(n, 1)).tolist() if counts is not None else []
    verdict = Verdict.PASS if violations == 0 and negatives == 0 else Verdict.FAIL
    return TrapReport(verdict, n, steps, violations, negatives, frequencies)


@dataclass
class ContinuityReport:
    gaps: List[float]
    medians: List[float]
    p95: List[float]
    verdict: Verdict
    n_paths: int

    def to_dict(self) -> Dict:
        return {"verdict": self.verdict.value, "gaps": self.gaps, "medians": self.medians,
                "p95": self.p95, "n_paths": self.n_paths, "note": STOPPING_NOTE}

    def series(self) -> Tuple[List[str], List[List[float]]]:
        return ["gap", "median_zeta", "p95_zeta"], [list(row) for row in zip(self.gaps, self.medians, self.p95)]


def continuity_experiment(model: CoefficientModel, r: ModulusSpec, a, gaps: Sequence[float] = DEFAULT_GAPS,
                          config: Optional[SimConfig] = None, epsilon: float = DEFAULT_EPSILON,
                          direction=None) -> ContinuityReport:
    """
    zeta at T ^ tau ^ tau_eps across an initial-gap sweep with common random
    numbers; Pass when median and 95th percentile shrink with the gap.
    """
    config = config or SimConfig()
    a = np.asarray(a, dtype=float)
    unit = np.zeros(model.d)
    unit[0] = 1.0
    direction = unit if direction is None else np.asarray(direction, dtype=float) / np.linalg.norm(direction)
    band = StoppingBand.full(model.d, epsilon)
    gaps = sorted((float(g) for g in gaps), reverse=True)

    medians, p95 = [], []
    for g in gaps:
        batches = _coupled_batches(model, a, a + g * direction, config, config.n_paths)
        finals = []
        for b in batches:
            sigma = np.minimum(_stop_indices(b, band, r.c0), b.zeta.shape[1] - 1)
            finals.append(b.zeta[np.arange(b.zeta.shape[0]), sigma])
        z = np.concatenate(finals)
        medians.append(float(np.median(z)))
        p95.append(float(np.percentile(z, 95)))
        logger.info(f"continuity: gap={g:.1e} median={medians[-1]:.3e} p95={p95[-1]:.3e}")
    monotone = all(lo <= hi for hi, lo in zip(medians, medians[1:])) and all(lo <= hi for hi, lo in zip(p95, p95[1:]))
    verdict = Verdict.PASS if monotone else Verdict.FAIL
    return ContinuityReport(gaps, medians, p95, verdict, config.n_paths)


# ---------------------------------------------------------------------
# cascade stage after a joint trap
# ---------------------------------------------------------------------


@dataclass
class CascadeReport:
    verdict: Verdict
    trapped_component: Optional[int]
    trap_time: Optional[float]
    band: Optional[StoppingBand]
    stage_stop_time: Optional[float]
    K: float = math.nan
    audit: Optional[EtaAudit] = None
    envelope_margin: float = math.nan
    note: str = ""

    def to_dict(self) -> Dict:
        return {"verdict": self.verdict.value, "trapped_component": self.trapped_component,
                "trap_time": self.trap_time, "band": None if self.band is None else self.band.to_dict(),
                "stage_stop_time": self.stage_stop_time, "K": self.K,
                "envelope_margin": self.envelope_margin, "note": self.note,
                "eta_audit": None if self.audit is None else self.audit.to_dict()}


def joint_trap(run: CoupledRun) -> Optional[Tuple[int, int]]:
    """(component, simulation step) of the earliest component trapped in both X and Y."""
    best = None
    for k, (tx, ty) in enumerate(zip(run.x.trapped_at, run.y.trapped_at)):
        if tx is None or ty is None:
            continue
        when = max(tx, ty)
        if best is None or when < best[1]:
            best = (k, when)
    return best


def cascade_demo(model: CoefficientModel, run: CoupledRun, epsilon: float = DEFAULT_EPSILON,
                 r: Optional[ModulusSpec] = None, C: Optional[float] = None, delta: float = DEFAULT_DELTA,
                 c0: Optional[float] = None, fam: Optional[PhiFamily] = None,
                 lipschitz_pairs: int = 20_000) -> CascadeReport:
    """
    One induction stage: after the joint trap of component k, stop on the
    band over I^d minus {k} with k cap-only, audit eta on the post-trap
    segment and compare log Phi_delta(zeta) against the restarted envelope.
    Without C, it is 1.1 times the sampled extended-Lipschitz constant.
    """
    trap = joint_trap(run)
    if trap is None:
        return CascadeReport(Verdict.INCONCLUSIVE, None, None, None, None, note="no joint trap in the run")
    if model.d < 2:
        return CascadeReport(Verdict.INCONCLUSIVE, trap[0], None, None, None, note="cascade needs d >= 2")
    r = r or ModulusSpec.log()
    c0 = r.c0 if c0 is None else c0
    if C is None:
        C = C_INFLATION * verify_extended_lipschitz(model, r, lipschitz_pairs).C_hat
    k, when = trap
    j0 = int(np.searchsorted(run.x.record_steps, when, side="left"))
    band = StoppingBand(epsilon, tuple(i for i in range(model.d) if i != k), (k,))

    times = run.times[j0:]
    X, Y = run.x.states[None, j0:], run.y.states[None, j0:]
    zeta = run.zeta[None, j0:]
    sigma = np.minimum(_first_index(zeta >= c0 * c0), _band_index(band, model, X, Y))
    stop = int(sigma[0])
    stop_time = None if stop >= times.size else float(times[stop])
    audit = _audit_arrays(times, X, Y, model._f(X), model._f(Y), sigma, r, C, epsilon)

    K = gronwall_constant(model.alpha, C, r.floor_C1, estimate_C2(r), model.d, epsilon, cascade=True)
    fam = fam or PhiFamily(r, delta)
    z = np.minimum(_stopped(zeta, sigma)[0], r.c0)
    log_phi = fam.phi_many(z)
    envelope = log_phi[0] + K * (times - times[0])
    margin = float(np.min(envelope - log_phi))
    env_verdict = Verdict.PASS if margin >= -1e-12 else Verdict.FAIL
    verdict = fold([audit.verdict, env_verdict])
    logger.info(f"cascade: component {k + 1} trapped at t={times[0]:g}; stage band J={[i + 1 for i in band.active]}")
    return CascadeReport(verdict, k, float(times[0]), band, stop_time, K, audit, margin,
                         note="single induction stage; envelope is pathwise evidence")


@dataclass
class CascadeSummary:
    verdict: Verdict
    n_paths: int
    n_trapped: int
    n_pass: int
    n_fail: int
    worst_margin: float
    stages: List[CascadeReport]
    audit: Optional[EtaAudit] = None

    def to_dict(self) -> Dict:
        return {"verdict": self.verdict.value, "n_paths": self.n_paths, "n_trapped": self.n_trapped,
                "n_pass": self.n_pass, "n_fail": self.n_fail, "worst_margin": self.worst_margin,
                "first_stage": self.stages[0].to_dict() if self.stages else None,
                "eta_audit": None if self.audit is None else self.audit.to_dict()}

    def series(self) -> Tuple[List[str], List[List[float]]]:
        rows = [[s.trapped_component + 1, s.trap_time, s.envelope_margin, s.audit.worst_slack if s.audit else math.nan]
                for s in self.stages]
        return ["component", "trap_time", "envelope_margin", "eta_worst_slack"], rows


def cascade_experiment(model: CoefficientModel, r: ModulusSpec, aX, gap, config: SimConfig,
                       epsilon: float = DEFAULT_EPSILON, delta: float = DEFAULT_DELTA,
                       C_hat: Optional[float] = None, lipschitz_pairs: int = 20_000,
                       box: float = 10.0) -> CascadeSummary:
    """
    cascade_demo over every coupled run of a batch that shows a joint trap.
    The stage audits share one C; a violation re-estimates it and reruns
    every stage, as the Gronwall audit does.
    """
    aX = np.asarray(aX, dtype=float)
    aY = aX + np.asarray(gap, dtype=float)
    if C_hat is None:
        C_hat = verify_extended_lipschitz(model, r, lipschitz_pairs, config.seed, box).C_hat
    fam = PhiFamily(r, delta)
    trapped = [run for b in _coupled_batches(model, aX, aY, config, config.n_paths)
               for run in map(b.run, range(b.x.n_paths)) if joint_trap(run) is not None]
    stages: List[CascadeReport] = []

    def run_stages(C: float) -> EtaAudit:
        stages[:] = [cascade_demo(model, run, epsilon, r, C, delta, fam=fam) for run in trapped]
        return _merge_audits([s.audit for s in stages])

    audit = None
    if trapped and model.d >= 2:
        audit = audit_with_reestimation(run_stages, model, r, C_hat, lipschitz_pairs, config.seed, box)
    else:
        stages = [cascade_demo(model, run, epsilon, r, C_INFLATION * C_hat, delta, fam=fam) for run in trapped]
    n_pass = sum(s.verdict is Verdict.PASS for s in stages)
    n_fail = sum(s.verdict is Verdict.FAIL for s in stages)
    verdict = Verdict.INCONCLUSIVE if not stages else (Verdict.FAIL if n_fail else Verdict.PASS)
    worst = min((s.envelope_margin for s in stages), default=math.nan)
    return CascadeSummary(verdict, config.n_paths, len(stages), n_pass, n_fail, worst, stages, audit)


@dataclass
class CatalystTrapReport:
    verdict: Verdict
    components: List[Dict]

    def to_dict(self) -> Dict:
        return {"verdict": self.verdict.value, "components": self.components}


def catalyst_trap_audit(run: CoupledRun, model: CoefficientModel, rel_tol: float = 1e-9) -> CatalystTrapReport:
    """
    Once f_l vanishes for both solutions at a recorded step it must stay 0,
    and x^l, y^l must follow the drift-only Euler orbit from there on.
    """
    fX, fY = model._f(run.x.states), model._f(run.y.states)
    both = (fX == 0.0) & (fY == 0.0)
    steps = run.x.record_steps
    growth = 1.0 + model.alpha_array * run.dt
    components, checked, broken = [], 0, 0
    for l in range(model.d):
        hits = np.flatnonzero(both[:, l])
        if hits.size == 0:
            continue
        j = int(hits[0])
        checked += 1
        stays = bool(np.all(both[j:, l]))
        orbit = growth[l] ** (steps[j:] - steps[j]).astype(float)
        ok_x = np.allclose(run.x.states[j:, l], run.x.states[j, l] * orbit, rtol=rel_tol, atol=0.0)
        ok_y = np.allclose(run.y.states[j:, l], run.y.states[j, l] * orbit, rtol=rel_tol, atol=0.0)
        same = run.x.states[j, l] != run.y.states[j, l] or bool(np.all(run.x.states[j:, l] == run.y.states[j:, l]))
        ok = stays and ok_x and ok_y and same
        broken += not ok
        components.append({"component": l + 1, "trap_time": float(run.times[j]), "f_stays_zero": stays,
                           "drift_orbit": bool(ok_x and ok_y), "coincide": same})
    if checked == 0:
        verdict = Verdict.INCONCLUSIVE
    else:
        verdict = Verdict.FAIL if broken else Verdict.PASS
    return CatalystTrapReport(verdict, components)


# ---------------------------------------------------------------------
# explosion dichotomy
# ---------------------------------------------------------------------


@dataclass
class ExplosionReport:
    verdict: Verdict
    growth: GrowthReport
    n_paths: int
    explosions: int
    first_times: List[float]

    def to_dict(self) -> Dict:
        return {"verdict": self.verdict.value, "growth": self.growth.to_dict(), "n_paths": self.n_paths,
                "explosions": self.explosions, "first_times": self.first_times[:MAX_VIOLATION_RECORDS]}

    def series(self) -> Tuple[List[str], List[List[float]]]:
        return ["explosion_time"], [[t] for t in self.first_times]


def explosion_experiment(model: CoefficientModel, rho: ModulusSpec, C: float, config: SimConfig, N: int,
                         a, k_dom: Optional[float] = None, r_max: float = 1e4,
                         growth_samples: int = 10_000) -> ExplosionReport:
    """
    Count paths reaching |X| >= M before T. Growth-compliant models should
    show none; models violating the growth bound should show some.
    """
    a = np.asarray(a, dtype=float)
    k_dom = max(float(np.linalg.norm(a)), 1.0) if k_dom is None else k_dom
    growth = verify_growth_bound(model, rho, C, k_dom, growth_samples, config.seed, r_max)
    cfg = SimConfig(dt=config.dt, T=config.T, M=config.M, seed=config.seed, n_paths=N,
                    record_stride=config.n_steps)

    def reduce(idx):
        b = simulate_batch(model, a, cfg, idx)
        hit = b.exploded_at >= 0
        return (b.exploded_at[hit] * cfg.dt).tolist()

    times = [t for part in map_paths(reduce, N, batch_size_for(cfg, model.d)) for t in part]
    expected = growth.verdict is Verdict.PASS
    verdict = Verdict.PASS if (expected and not times) or (not expected and times) else Verdict.FAIL
    logger.info(f"explosion: {len(times)} of {N} paths exploded (growth bound {growth.verdict.value}) -> {verdict.value}")
    return ExplosionReport(verdict, growth, N, len(times), times)
