"""
Coefficient models f = (f_1..f_d) with drift alpha, plus sampled verifiers
for the extended Lipschitz bound, the growth bound and the zero-set
conditions.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from modulus import ModulusSpec, Side
from verdicts import Verdict

logger = logging.getLogger(__name__)

DEFAULT_BOX = 10.0
DEFAULT_PAIRS = 100_000
DEFAULT_TRUNCATION = 10_000
GROWTH_SHELLS = 32
INTERIOR_FLOOR = 1e-12
MAX_FACE_DIM = 12
_EVAL_BLOCK = 1 << 22


class CoefficientFamily(str, Enum):
    CYCLIC = "cyclic"
    SIN_SERIES = "sin_series"
    CONSTANT = "constant"
    RADIAL = "radial"
    COMPOSITE = "composite"


def sin_series_V(u, truncation: int = DEFAULT_TRUNCATION) -> np.ndarray:
    """V_N(u) = sum_{k<=N} |sin(k u)| / k^2, evaluated in memory-bounded blocks."""
    u = np.asarray(u, dtype=float)
    flat = u.ravel()
    k = np.arange(1, truncation + 1, dtype=float)
    weights = 1.0 / k ** 2
    rows = max(1, _EVAL_BLOCK // truncation)
    out = np.empty_like(flat)
    for start in range(0, flat.size, rows):
        block = flat[start:start + rows]
        out[start:start + rows] = np.sum(np.abs(np.sin(np.outer(block, k))) * weights, axis=1)
    return out.reshape(u.shape)


@dataclass(frozen=True)
class CoefficientModel:
    """
    Immutable f and alpha. Build through the family constructors; eval
    works on a single state (d,) or on a batch (..., d).
    """

    d: int
    alpha: Tuple[float, ...]
    family: CoefficientFamily
    params: Dict[str, object] = field(default_factory=dict, compare=False)
    hook: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if len(self.alpha) != self.d:
            raise ValueError(f"alpha has {len(self.alpha)} entries, expected d={self.d}")
        if not all(math.isfinite(a) for a in self.alpha):
            raise ValueError("alpha entries must be finite")
        if self.family is CoefficientFamily.COMPOSITE and self.hook is None:
            raise ValueError("composite model needs an evaluation hook")

    # --- constructors -------------------------------------------------

    @classmethod
    def cyclic(cls, gamma, alpha=None) -> "CoefficientModel":
        gamma = _positive_vector(gamma, "gamma")
        return cls(len(gamma), _alpha(alpha, len(gamma)), CoefficientFamily.CYCLIC, {"gamma": gamma})

    @classmethod
    def sin_series(cls, theta, truncation: int = DEFAULT_TRUNCATION, alpha=None) -> "CoefficientModel":
        theta = _positive_vector(theta, "theta")
        if truncation < 1:
            raise ValueError(f"truncation must be >= 1, got {truncation}")
        return cls(len(theta), _alpha(alpha, len(theta)), CoefficientFamily.SIN_SERIES,
                   {"theta": theta, "truncation": int(truncation)})

    @classmethod
    def constant(cls, values, alpha=None) -> "CoefficientModel":
        values = tuple(float(v) for v in values)
        if any(not (v >= 0 and math.isfinite(v)) for v in values):
            raise ValueError(f"constant values must be non-negative, got {values}")
        return cls(len(values), _alpha(alpha, len(values)), CoefficientFamily.CONSTANT, {"values": values})

    @classmethod
    def radial(cls, scale, power: float, alpha=None) -> "CoefficientModel":
        scale = tuple(float(v) for v in scale)
        if any(not (v >= 0 and math.isfinite(v)) for v in scale) or not power >= 0:
            raise ValueError("radial model needs non-negative scale and power")
        return cls(len(scale), _alpha(alpha, len(scale)), CoefficientFamily.RADIAL,
                   {"scale": scale, "power": float(power)})

    @classmethod
    def composite(cls, d: int, hook: Callable[[np.ndarray], np.ndarray], alpha=None) -> "CoefficientModel":
        return cls(d, _alpha(alpha, d), CoefficientFamily.COMPOSITE, {}, hook)

    # --- evaluation ---------------------------------------------------

    @property
    def alpha_array(self) -> np.ndarray:
        return np.asarray(self.alpha, dtype=float)

    def _f(self, x: np.ndarray) -> np.ndarray:
        fam = self.family
        if fam is CoefficientFamily.CYCLIC:
            return np.roll(x, 1, axis=-1) * np.asarray(self.params["gamma"])
        if fam is CoefficientFamily.SIN_SERIES:
            v = sin_series_V(x, self.params["truncation"]).sum(axis=-1, keepdims=True)
            return v + np.asarray(self.params["theta"])
        if fam is CoefficientFamily.CONSTANT:
            return np.broadcast_to(np.asarray(self.params["values"]), x.shape).copy()
        if fam is CoefficientFamily.RADIAL:
            norm2 = np.sum(x * x, axis=-1, keepdims=True)
            with np.errstate(over="ignore"):
                return np.asarray(self.params["scale"]) * (1.0 + norm2) ** self.params["power"]
        return np.asarray(self.hook(x), dtype=float)

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.d,):
            raise ValueError(f"state must end in dimension {self.d}, got shape {x.shape}")
        if not np.all(np.isfinite(x)) or np.any(x < 0):
            raise ValueError("state must be finite and non-negative")
        return self._f(x)

    def to_dict(self) -> Dict:
        params = {k: list(v) if isinstance(v, tuple) else v for k, v in self.params.items()}
        return {"d": self.d, "alpha": list(self.alpha), "family": {"kind": self.family.value, "params": params}}


def _positive_vector(values, name: str) -> Tuple[float, ...]:
    values = tuple(float(v) for v in values)
    if not values or any(not (v > 0 and math.isfinite(v)) for v in values):
        raise ValueError(f"{name} must be a non-empty vector of positive reals, got {values}")
    return values


def _alpha(alpha, d: int) -> Tuple[float, ...]:
    return tuple(0.0 for _ in range(d)) if alpha is None else tuple(float(a) for a in alpha)


def eval_f(model: CoefficientModel, x) -> np.ndarray:
    return model.eval(x)


# ---------------------------------------------------------------------
# sampled verifiers
# ---------------------------------------------------------------------


@dataclass
class LipschitzReport:
    C_hat: float
    worst_pair: Tuple[List[float], List[float], float]
    n_samples: int
    verdict: Verdict

    def to_dict(self) -> Dict:
        x, y, ratio = self.worst_pair
        return {"C_hat": self.C_hat, "worst_pair": {"x": x, "y": y, "ratio": ratio},
                "n_samples": self.n_samples, "verdict": self.verdict.value}


def verify_extended_lipschitz(model: CoefficientModel, r: ModulusSpec, n_pairs: int = DEFAULT_PAIRS,
                              seed: int = 0, box: float = DEFAULT_BOX,
                              chunk: int = 20_000) -> LipschitzReport:
    """
    C_hat = max |f(x)-f(y)|^2 / (|x-y|^2 r(|x-y|^2)) over pairs with x in
    [0, box]^d and |x-y| <= c0. y is reflected into the orthant, which only
    shortens |x-y|.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    radius = min(r.c0, math.sqrt(r.c0))
    best, best_pair = 0.0, ([math.nan] * model.d, [math.nan] * model.d, 0.0)
    done = 0
    while done < n_pairs:
        n = min(chunk, n_pairs - done)
        x = rng.uniform(0.0, box, size=(n, model.d))
        direction = rng.standard_normal((n, model.d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        u = direction * (radius * rng.random((n, 1)))
        y = np.abs(x + u)
        gap2 = np.sum((x - y) ** 2, axis=1)
        keep = gap2 > 0
        if np.any(keep):
            df2 = np.sum((model.eval(x[keep]) - model.eval(y[keep])) ** 2, axis=1)
            ratio = df2 / (gap2[keep] * r.eval(gap2[keep]))
            k = int(np.argmax(ratio))
            if ratio[k] > best:
                best = float(ratio[k])
                best_pair = (x[keep][k].tolist(), y[keep][k].tolist(), best)
        done += n
    verdict = Verdict.PASS if math.isfinite(best) else Verdict.FAIL
    logger.info(f"extended Lipschitz: C_hat={best:.6g} over {n_pairs} pairs ({model.family.value})")
    return LipschitzReport(best, best_pair, n_pairs, verdict)


@dataclass
class GrowthReport:
    max_ratio: float
    worst_x: List[float]
    C: float
    n_samples: int
    verdict: Verdict

    def to_dict(self) -> Dict:
        return {"max_ratio": self.max_ratio, "worst_x": self.worst_x, "C": self.C,
                "n_samples": self.n_samples, "verdict": self.verdict.value}


def verify_growth_bound(model: CoefficientModel, rho: ModulusSpec, C: float, k_dom: float,
                        n_samples: int = 10_000, seed: int = 0, r_max: float = 1e4,
                        shells: int = GROWTH_SHELLS) -> GrowthReport:
    """max over shells k_dom <= |x| <= r_max of sum f_i^2 / (|x|^2 rho(|x|^2) + 1), against C."""
    if rho.side is not Side.INFINITY:
        raise ValueError("growth bound needs rho living at infinity")
    lo = max(k_dom, math.sqrt(rho.k_dom))
    if not r_max > lo:
        raise ValueError(f"r_max={r_max} must exceed the lower shell {lo}")
    rng = np.random.default_rng(seed)
    radii = np.repeat(np.geomspace(lo, r_max, shells), max(1, n_samples // shells))
    direction = np.abs(rng.standard_normal((radii.size, model.d)))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    x = direction * radii[:, None]
    norm2 = radii ** 2
    with np.errstate(over="ignore", invalid="ignore"):
        total = np.sum(model.eval(x) ** 2, axis=1)
        ratio = total / (norm2 * rho.eval(norm2) + 1.0)
    ratio = np.where(np.isnan(ratio), np.inf, ratio)
    k = int(np.argmax(ratio))
    worst = float(ratio[k])
    verdict = Verdict.PASS if worst <= C else Verdict.FAIL
    logger.info(f"growth bound: max ratio {worst:.6g} vs C={C:g} -> {verdict.value}")
    return GrowthReport(worst, x[k].tolist(), C, int(radii.size), verdict)


class ZeroSetClass(str, Enum):
    POSITIVE = "I"
    BOUNDARY = "II"
    NEITHER = "Neither"


@dataclass
class ZeroSetReport:
    classification: ZeroSetClass
    interior_min: float
    interior_zeros: int
    faces: List[Dict]
    n_interior: int
    n_boundary: int
    note: str = "sampled faces only; graded evidence, not proof"

    def to_dict(self) -> Dict:
        return {"classification": self.classification.value, "interior_min": self.interior_min,
                "interior_zeros": self.interior_zeros, "faces": self.faces,
                "n_interior": self.n_interior, "n_boundary": self.n_boundary, "note": self.note}


def _faces(d: int, rng: np.random.Generator, limit: int = 4096) -> List[Tuple[int, ...]]:
    if d <= MAX_FACE_DIM:
        return [z for k in range(1, d + 1) for z in itertools.combinations(range(d), k)]
    picked = {tuple(sorted(rng.choice(d, size=rng.integers(1, d + 1), replace=False))) for _ in range(limit)}
    return sorted(picked)


def classify_zero_set(model: CoefficientModel, n_interior: int = 2000, n_boundary: int = 200,
                      seed: int = 0, box: float = DEFAULT_BOX) -> ZeroSetReport:
    """
    (I): no zero anywhere sampled and interior values bounded away from 0.
    (II) candidate: zeros only on faces, and each f_i either vanishes on every
    sample of a face (fixed zero-index set) or on none of them.
    """
    rng = np.random.default_rng(seed)
    interior = box * (1.0 - rng.random((n_interior, model.d)))
    f_in = model.eval(interior)
    interior_min = float(np.min(f_in))
    interior_zeros = int(np.count_nonzero(np.any(f_in == 0.0, axis=1)))

    faces = []
    consistent, boundary_zero = True, False
    for zero_set in _faces(model.d, rng):
        pts = box * (1.0 - rng.random((n_boundary, model.d)))
        pts[:, list(zero_set)] = 0.0
        vanish = model.eval(pts) == 0.0
        always = np.all(vanish, axis=0)
        never = ~np.any(vanish, axis=0)
        face_ok = bool(np.all(always | never))
        consistent &= face_ok
        boundary_zero |= bool(np.any(vanish))
        faces.append({"zero_indices": [i + 1 for i in zero_set],
                      "vanishing": [i + 1 for i in np.flatnonzero(always)],
                      "consistent": face_ok})

    if interior_zeros == 0 and interior_min >= INTERIOR_FLOOR and not boundary_zero:
        cls = ZeroSetClass.POSITIVE
    elif interior_zeros == 0 and consistent:
        cls = ZeroSetClass.BOUNDARY
    else:
        cls = ZeroSetClass.NEITHER
    logger.info(f"zero set of {model.family.value} model: {cls.value} ({len(faces)} faces sampled)")
    return ZeroSetReport(cls, interior_min, interior_zeros, faces, n_interior, n_boundary)
