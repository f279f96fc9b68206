"""Spot variance estimators.

Truncated kernel estimator
--------------------------
For a path observed at ``t_i = i * dt`` with increments ``r_i = X_{t_i} - X_{t_{i-1}}``

    c0(tau; v) = sum_i K_b(t_{i-1} - tau) r_i^2 1{|r_i| <= v}
                 / (dt * sum_j K_b(t_{j-1} - tau)),       b = m * dt.

The threshold bias of ``c0`` behaves like a sum of powers of ``v``.  Each
debiasing stage removes one power by comparing the previous stage at
thresholds ``v, zeta v, zeta^2 v``.  Two flavours are provided:

* ``theoretical``: the pointwise ratio ``(c(zv) - c(v))^2 / second difference``;
* ``practical``: the correction ratio is aggregated over a coarse time grid
  (with thresholds scaled by ``p``) and sign-constrained.

Characteristic-function competitors
-----------------------------------
``S(tau; u) = dt * sum_i K_h(t_i - tau) cos(u r_i / sqrt(dt))`` is log-transformed
into a variance estimate, with a sinh^2 small-sample correction and an
optional aggregated debiasing term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import EXPONENTIAL, QUARTIC_K3, KernelSpec
from .sim import PathSample

__all__ = [
    "EPS_REL",
    "EPS_ABS",
    "DegenerateDenominatorError",
    "ThresholdRule",
    "CFTuning",
    "EstimatorConfig",
    "SpotEstimate",
    "bipower_variation",
    "threshold_v",
    "bandwidth_multiplier",
    "spot_vol_truncated",
    "debias_step",
    "spot_vol_debiased_theoretical",
    "spot_vol_debiased_practical",
    "cf_smoothed_cosine",
    "cf_spot_vol",
    "cf_spot_vol_debiased",
    "TruncatedKernelEngine",
    "CFEngine",
    "aggregation_grid",
]

EPS_REL = 1e-10
EPS_ABS = 1e-14
SIGN_MODES = ("flip", "restrict")


class DegenerateDenominatorError(ArithmeticError):
    """Kernel weights around ``tau`` sum to zero."""


@dataclass(frozen=True)
class ThresholdRule:
    """``v = sqrt(BV) * dt**alpha`` (``kind="power"``) or ``sqrt(BV) * v0`` (``"fixed"``)."""

    kind: str = "power"
    alpha: float = 5.0 / 12.0
    v0: float | None = None

    def __post_init__(self):
        if self.kind not in ("power", "fixed"):
            raise ValueError(f"unknown threshold rule {self.kind!r}")
        if self.kind == "power" and not 0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 1/2)")
        if self.kind == "fixed" and not (self.v0 is not None and self.v0 > 0):
            raise ValueError("fixed rule needs v0 > 0")


@dataclass(frozen=True)
class CFTuning:
    """Tuning of the characteristic-function estimators.

    ``h = dt**h_power``, ``u = dt**u_power / sqrt(BV)``.
    """

    kernel: KernelSpec = QUARTIC_K3
    h_power: float = 0.51
    u_power: float = 0.0025
    lam: float = 1.9
    p: float = 0.25

    def __post_init__(self):
        if not self.h_power > 0:
            raise ValueError("h_power must be > 0")
        if not self.lam > 1:
            raise ValueError("lambda must be > 1")
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning for the truncated kernel estimators.

    The bandwidth is ``m * dt`` with ``m = m_scale * dt**(-m_power)``.
    ``zeta[k-1]``, ``p_scalers[k-1]`` and ``signs[k-1]`` drive debias stage ``k``.

    ``sign_mode`` controls how the stage sign meets the ``max(., 0)`` clamp on
    the aggregated ratio ``A = s * r``:

    * ``"flip"``: correction factor ``max(s * r, 0)``;
    * ``"restrict"``: the raw ratio ``r`` is used only when its sign agrees
      with ``s`` (factor ``s * max(s * r, 0)``), otherwise the stage is a no-op.
    """

    kernel: KernelSpec = EXPONENTIAL
    m_power: float = 0.5
    m_scale: float = 1.0
    v_rule: ThresholdRule = field(default_factory=ThresholdRule)
    zeta: tuple[float, ...] = ()
    p_scalers: tuple[float, ...] = ()
    signs: tuple[float, ...] = (1.0, -1.0)
    cf: CFTuning = field(default_factory=CFTuning)
    clamp_negative: bool = False
    sign_mode: str = "flip"

    def __post_init__(self):
        if self.sign_mode not in SIGN_MODES:
            raise ValueError(f"sign_mode must be one of {SIGN_MODES}")
        object.__setattr__(self, "zeta", tuple(float(z) for z in self.zeta))
        object.__setattr__(self, "p_scalers", tuple(float(p) for p in self.p_scalers))
        object.__setattr__(self, "signs", tuple(float(s) for s in self.signs))
        if any(z <= 1 for z in self.zeta):
            raise ValueError("every zeta must be > 1")
        if any(not 0 < p <= 1 for p in self.p_scalers):
            raise ValueError("every p scaler must lie in (0, 1]")
        if not self.m_scale > 0:
            raise ValueError("m_scale must be > 0")

    def m(self, dt: float) -> float:
        return bandwidth_multiplier(dt, self.m_power, self.m_scale)

    def with_tuning(self, zeta=None, p_scalers=None) -> "EstimatorConfig":
        return replace(self,
                       zeta=self.zeta if zeta is None else tuple(zeta),
                       p_scalers=self.p_scalers if p_scalers is None else tuple(p_scalers))


@dataclass
class SpotEstimate:
    tau: float
    value: float
    stage: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stage not in (0, 1, 2):
            raise ValueError("stage must be 0, 1 or 2")

    @property
    def flags(self) -> list[str]:
        return sorted(k for k, v in self.diagnostics.get("flags", {}).items() if v)


def bandwidth_multiplier(dt: float, power: float = 0.5, scale: float = 1.0) -> float:
    return scale * dt ** (-power)


def bipower_variation(path: PathSample) -> float:
    """``(pi/2) sum_{i>=2} |r_i| |r_{i-1}| / T``."""
    if path.n < 2:
        raise ValueError("bipower variation needs at least three observations")
    a = np.abs(path.increments)
    return float(0.5 * math.pi * np.dot(a[1:], a[:-1]) / path.horizon_T)


def threshold_v(bv: float, dt: float, rule: ThresholdRule) -> float:
    """Truncation level; ``inf`` when ``bv == 0`` so nothing is truncated."""
    if bv < 0 or not dt > 0:
        raise ValueError("need bv >= 0 and dt > 0")
    if bv == 0:
        return math.inf
    scale = dt ** rule.alpha if rule.kind == "power" else rule.v0
    return math.sqrt(bv) * scale


def spot_vol_truncated(path: PathSample, tau: float, m: float, v: float,
                       kernel: KernelSpec) -> SpotEstimate:
    """Stage-0 truncated kernel estimate at one ``tau``."""
    if not 0 < tau < path.horizon_T:
        raise ValueError("tau must lie strictly inside (0, T)")
    if m < 1 or not v > 0:
        raise ValueError("need m >= 1 and v > 0")
    dt = path.dt
    r = path.increments
    w = kernel((path.times[:-1] - tau) / (m * dt)) / (m * dt)
    den = dt * w.sum()
    if not den > 0:
        raise DegenerateDenominatorError(f"kernel weights vanish around tau={tau}")
    keep = np.abs(r) <= v
    value = float(np.dot(w[keep], r[keep] ** 2) / den)
    return SpotEstimate(tau, value, 0, {
        "truncated": int(path.n - keep.sum()),
        "denominator": float(den),
        "flags": {"negative": value < 0},
    })


def _guard_mask(den, *terms):
    scale = np.maximum.reduce([np.abs(t) for t in terms] + [np.full(np.shape(den), EPS_ABS)])
    return np.abs(den) < EPS_REL * scale


def _debias(c_v, c_zv, c_z2v):
    c_v, c_zv, c_z2v = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (c_v, c_zv, c_z2v)))
    num = (c_zv - c_v) ** 2
    den = c_z2v - 2.0 * c_zv + c_v
    guard = _guard_mask(den, c_v, c_zv, c_z2v)
    safe = np.where(guard, 1.0, den)
    out = np.where(guard, c_v, c_v - num / safe)
    return out, num, den, guard


def debias_step(c_v, c_zv, c_z2v):
    """One Richardson-type step ``c(v) - (c(zv) - c(v))^2 / (c(z^2 v) - 2 c(zv) + c(v))``.

    If the second difference is negligible relative to the inputs the first
    argument is returned unchanged.  Works elementwise on arrays.
    """
    out = _debias(c_v, c_zv, c_z2v)[0]
    return float(out) if out.ndim == 0 else out


def aggregation_grid(n: int, m: float, start: int = 1) -> np.ndarray:
    """Observation indices ``i * round(m)`` of the coarse aggregation grid.

    ``start=1`` gives ``i = 1..floor(n / round(m))``; ``start=0`` shifts the
    grid to begin at index 0.
    """
    step = max(1, int(round(m)))
    count = n // step
    return (np.arange(count) + start) * step


class TruncatedKernelEngine:
    """Evaluates truncated kernel estimates for many thresholds at once.

    For each evaluation point the normalised kernel weights are accumulated in
    order of increasing ``|r_i|``; the estimate at any threshold is then a
    lookup into that cumulative sum.
    """

    def __init__(self, path: PathSample, kernel: KernelSpec, m: float,
                 points: dict[str, np.ndarray]):
        self.path = path
        self.kernel = kernel
        self.m = float(m)
        dt = path.dt
        r = path.increments
        b = self.m * dt
        order = np.argsort(np.abs(r), kind="stable")
        self._abs_sorted = np.abs(r)[order]
        r2 = (r * r)[order]
        left = path.times[:-1][order]
        self._cum = {}
        self._den = {}
        for key, taus in points.items():
            taus = np.asarray(taus, dtype=float)
            w = kernel((left[None, :] - taus[:, None]) / b)
            den = dt * w.sum(axis=1)
            self._den[key] = den
            with np.errstate(divide="ignore", invalid="ignore"):
                cum = np.cumsum(w * r2[None, :], axis=1) / den[:, None]
            self._cum[key] = cum
        self.points = {k: np.asarray(v, dtype=float) for k, v in points.items()}
        self._memo = {}
        self.flags = {"guard": 0, "clamp_ratio": 0, "clamp_diff": 0, "degenerate": 0}

    def degenerate(self, key: str) -> np.ndarray:
        return ~(self._den[key] > 0)

    def forget(self, min_stage: int = 1) -> None:
        """Drop memoised debias results of stage ``min_stage`` and above."""
        def stage_of(k):
            return k[3] if k[0] == "prac" else k[2]

        self._memo = {k: v for k, v in self._memo.items() if stage_of(k) < min_stage}

    def truncation_count(self, v: float) -> int:
        return int(len(self._abs_sorted) - np.searchsorted(self._abs_sorted, v, side="right"))

    def base(self, key: str, v: float) -> np.ndarray:
        k = int(np.searchsorted(self._abs_sorted, v, side="right"))
        cum = self._cum[key]
        if k == 0:
            return np.zeros(cum.shape[0])
        return cum[:, k - 1]

    def theoretical(self, key: str, v: float, zeta, stage: int):
        """Pointwise debiasing; returns ``(values, last_num, last_den, guard)``."""
        if stage == 0:
            val = self.base(key, v)
            return val, None, None, np.zeros(len(val), dtype=bool)
        z = zeta[stage - 1]
        a = self.theoretical(key, v, zeta, stage - 1)[0]
        b = self.theoretical(key, z * v, zeta, stage - 1)[0]
        c = self.theoretical(key, z * z * v, zeta, stage - 1)[0]
        out, num, den, guard = _debias(a, b, c)
        return out, num, den, guard

    def practical(self, key: str, v: float, zeta, p_scalers, signs, stage: int,
                  agg_key: str = "agg", sign_mode: str = "flip") -> np.ndarray:
        """Aggregated, sign-constrained debiasing at every point of ``key``."""
        memo_key = ("prac", key, v, stage, tuple(zeta[:stage]), tuple(p_scalers[:stage]),
                    tuple(signs[:stage]), sign_mode)
        hit = self._memo.get(memo_key)
        if hit is not None:
            return hit
        if stage == 0:
            out = self.base(key, v)
        else:
            z = zeta[stage - 1]
            prev = self.practical(key, v, zeta, p_scalers, signs, stage - 1, agg_key, sign_mode)
            up = self.practical(key, z * v, zeta, p_scalers, signs, stage - 1, agg_key, sign_mode)
            ratio = self.aggregated_ratio(v, zeta, p_scalers, signs, stage, agg_key, sign_mode)
            diff = up - prev
            if ratio < 0:
                self.flags["clamp_ratio"] += 1
            self.flags["clamp_diff"] += int(np.count_nonzero(diff < 0))
            factor = max(ratio, 0.0)
            if sign_mode == "restrict":
                factor *= signs[stage - 1]
            out = prev - factor * np.maximum(diff, 0.0)
        self._memo[memo_key] = out
        return out

    def aggregated_ratio(self, v, zeta, p_scalers, signs, stage, agg_key="agg",
                         sign_mode="flip") -> float:
        """Signed ratio ``A = s * sum(first diff) / sum(second diff)`` before clamping."""
        memo_key = ("ratio", v, stage, tuple(zeta[:stage]), tuple(p_scalers[:stage]),
                    tuple(signs[:stage]), sign_mode)
        hit = self._memo.get(memo_key)
        if hit is not None:
            return hit
        z = zeta[stage - 1]
        pv = p_scalers[stage - 1] * v
        c1 = self.practical(agg_key, pv, zeta, p_scalers, signs, stage - 1, agg_key, sign_mode)
        c2 = self.practical(agg_key, z * pv, zeta, p_scalers, signs, stage - 1, agg_key, sign_mode)
        c3 = self.practical(agg_key, z * z * pv, zeta, p_scalers, signs, stage - 1, agg_key,
                            sign_mode)
        ok = np.isfinite(c1) & np.isfinite(c2) & np.isfinite(c3)
        num = float(np.sum((c2 - c1)[ok]))
        den = float(np.sum((c3 - 2.0 * c2 + c1)[ok]))
        scale = max(float(np.max(np.abs(np.concatenate([c1[ok], c2[ok], c3[ok]])), initial=0.0)),
                    EPS_ABS)
        if abs(den) < EPS_REL * scale:
            self.flags["guard"] += 1
            ratio = 0.0
        else:
            ratio = signs[stage - 1] * num / den
        self._memo[memo_key] = ratio
        return ratio


def _single_point_engine(path, tau, config: EstimatorConfig, with_agg: bool):
    if not 0 < tau < path.horizon_T:
        raise ValueError("tau must lie strictly inside (0, T)")
    m = config.m(path.dt)
    points = {"tau": np.array([tau])}
    if with_agg:
        points["agg"] = path.times[aggregation_grid(path.n, m)]
    eng = TruncatedKernelEngine(path, config.kernel, m, points)
    if eng.degenerate("tau")[0]:
        raise DegenerateDenominatorError(f"kernel weights vanish around tau={tau}")
    return eng


def spot_vol_debiased_theoretical(path: PathSample, tau: float, config: EstimatorConfig,
                                  k: int, v: float | None = None) -> SpotEstimate:
    """Debias stage ``k`` by the pointwise recursion with thresholds ``v, zeta_k v, zeta_k^2 v``."""
    if k not in (1, 2):
        raise ValueError("stage must be 1 or 2")
    if len(config.zeta) < k:
        raise ValueError(f"stage {k} needs {k} zeta values")
    if v is None:
        v = threshold_v(bipower_variation(path), path.dt, config.v_rule)
    eng = _single_point_engine(path, tau, config, with_agg=False)
    thresholds = sorted({v * math.prod(p) for p in _threshold_products(config.zeta[:k])})
    val, num, den, guard = eng.theoretical("tau", v, config.zeta, k)
    value = float(val[0])
    if config.clamp_negative:
        value = max(value, 0.0)
    return SpotEstimate(tau, value, k, {
        "numerator": float(num[0]),
        "denominator": float(den[0]),
        "base_thresholds": thresholds,
        "truncated": eng.truncation_count(v),
        "flags": {"guard": bool(guard[0]), "negative": float(val[0]) < 0},
    })


def _threshold_products(zeta):
    prods = [()]
    for z in zeta:
        prods = [p + (f,) for p in prods for f in (1.0, z, z * z)]
    return prods


def spot_vol_debiased_practical(path: PathSample, tau: float, config: EstimatorConfig,
                                k: int, v: float | None = None) -> SpotEstimate:
    """Debias stage ``k`` with a time-aggregated, sign-constrained correction ratio."""
    if k not in (1, 2):
        raise ValueError("stage must be 1 or 2")
    if len(config.zeta) < k or len(config.p_scalers) < k:
        raise ValueError(f"stage {k} needs {k} zeta values and {k} p scalers")
    if v is None:
        v = threshold_v(bipower_variation(path), path.dt, config.v_rule)
    eng = _single_point_engine(path, tau, config, with_agg=True)
    val = eng.practical("tau", v, config.zeta, config.p_scalers, config.signs, k,
                        sign_mode=config.sign_mode)
    ratio = eng.aggregated_ratio(v, config.zeta, config.p_scalers, config.signs, k,
                                 sign_mode=config.sign_mode)
    value = float(val[0])
    if config.clamp_negative:
        value = max(value, 0.0)
    return SpotEstimate(tau, value, k, {
        "ratio": ratio,
        "truncated": eng.truncation_count(v),
        "flags": {"guard": eng.flags["guard"] > 0,
                  "clamp_ratio": eng.flags["clamp_ratio"] > 0,
                  "negative": float(val[0]) < 0},
    })


class CFEngine:
    """Smoothed empirical characteristic function of rescaled increments.

    ``points`` maps a key to evaluation times; weights use the right end of
    each increment interval.
    """

    def __init__(self, path: PathSample, kernel: KernelSpec, h: float,
                 points: dict[str, np.ndarray]):
        if not h > 0:
            raise ValueError("h must be > 0")
        self.path = path
        self.h = float(h)
        dt = path.dt
        self._scaled = path.increments / math.sqrt(dt)
        right = path.times[1:]
        self._w = {}
        for key, taus in points.items():
            taus = np.asarray(taus, dtype=float)
            w = kernel((right[None, :] - taus[:, None]) / h) / h
            self._w[key] = dt * w
        self._memo = {}
        self.flags = {"floor": 0, "guard": 0, "clamp": 0}

    def smoothed_cosine(self, key: str, u: float) -> np.ndarray:
        hit = self._memo.get(("S", key, u))
        if hit is None:
            hit = self._w[key] @ np.cos(u * self._scaled)
            self._memo[("S", key, u)] = hit
        return hit

    def spot(self, key: str, u: float) -> np.ndarray:
        hit = self._memo.get(("sig", key, u))
        if hit is not None:
            return hit
        dt = self.path.dt
        s = self.smoothed_cosine(key, u)
        floor = math.sqrt(dt / self.h)
        self.flags["floor"] += int(np.count_nonzero(s < floor))
        bar = -2.0 / u ** 2 * np.log(np.maximum(s, floor))
        # sinh^2 overflows to inf for tiny u; the estimate is then -inf
        with np.errstate(over="ignore"):
            out = bar - 2.0 * dt / (u ** 2 * self.h) * np.sinh(bar) ** 2
        self._memo[("sig", key, u)] = out
        return out

    def debiased(self, key: str, u: float, lam: float, p: float, agg_key: str = "agg"):
        """Returns ``(values, correction)``."""
        base = self.spot(key, u)
        local = np.minimum(self.spot(key, lam * u) - base, 0.0)
        g1 = self.spot(agg_key, p * u)
        g2 = self.spot(agg_key, lam * p * u)
        g3 = self.spot(agg_key, lam * lam * p * u)
        with np.errstate(invalid="ignore", over="ignore"):
            num = float(np.sum(g2 - g1))
            den = float(np.sum(g3 - 2.0 * g2 + g1))
        scale = max(float(np.max(np.abs(np.concatenate([g1, g2, g3])), initial=0.0)), EPS_ABS)
        if abs(den) < EPS_REL * scale:
            self.flags["guard"] += 1
            return base.copy(), np.zeros_like(base)
        self.flags["clamp"] += int(np.count_nonzero(local == 0.0))
        with np.errstate(invalid="ignore", over="ignore"):
            corr = num * local / den
        return base - corr, corr


def cf_smoothed_cosine(path: PathSample, tau: float, u: float, h: float,
                       kernel: KernelSpec) -> float:
    """``dt * sum_i K_h(t_i - tau) cos(u r_i / sqrt(dt))``."""
    if not (u > 0 and h > 0):
        raise ValueError("need u > 0 and h > 0")
    dt = path.dt
    w = kernel((path.times[1:] - tau) / h) / h
    return float(dt * np.dot(w, np.cos(u * path.increments / math.sqrt(dt))))


def cf_spot_vol(path: PathSample, tau: float, u: float, h: float, kernel: KernelSpec) -> float:
    """Log-transformed smoothed cosine with floor ``sqrt(dt/h)`` and sinh^2 correction."""
    dt = path.dt
    s = cf_smoothed_cosine(path, tau, u, h, kernel)
    bar = -2.0 / u ** 2 * math.log(max(s, math.sqrt(dt / h)))
    with np.errstate(over="ignore"):
        return float(bar - 2.0 * dt / (u ** 2 * h) * np.sinh(bar) ** 2)


def cf_default_frequency(path: PathSample, tuning: CFTuning) -> tuple[float, float]:
    """``(u, h)`` from the global bipower variation."""
    bv = bipower_variation(path)
    dt = path.dt
    u = dt ** tuning.u_power / math.sqrt(bv) if bv > 0 else 1.0
    return u, dt ** tuning.h_power


def cf_spot_vol_debiased(path: PathSample, tau: float, config: EstimatorConfig,
                         u: float | None = None, h: float | None = None) -> float:
    """CF estimate minus the aggregated bias correction.

    The aggregation grid starts at time 0 and is spaced ``m * dt`` with ``m``
    from ``config``.
    """
    cf = config.cf
    u0, h0 = cf_default_frequency(path, cf)
    u = u0 if u is None else u
    h = h0 if h is None else h
    m = config.m(path.dt)
    agg = path.times[aggregation_grid(path.n, m, start=0)]
    eng = CFEngine(path, cf.kernel, h, {"tau": np.array([tau]), "agg": agg})
    val, _ = eng.debiased("tau", u, cf.lam, cf.p)
    return float(val[0])
