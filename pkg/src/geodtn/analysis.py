"""Closed-form delay and delivery expressions, plus statistics over simulated runs."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .config import ScenarioConfig
from .mobility import Fleet, RwpModel


class AnalysisError(ValueError):
    pass


class DegenerateLambda(AnalysisError):
    """A zero relaying possibility makes the distribution phase last forever."""


class InsufficientRuns(AnalysisError):
    pass


@dataclass(frozen=True)
class AnalyticParams:
    K: int  # nodes in the network, destination included
    L: int  # copy budget
    EMT: float  # expected meeting time, seconds
    lam: float = 1.0  # relaying possibility

    def __post_init__(self):
        if not self.K > self.L >= 1:
            raise AnalysisError(f"need K > L >= 1, got K={self.K}, L={self.L}")
        if not 0.0 <= self.lam <= 1.0:
            raise AnalysisError(f"relaying possibility must lie in [0, 1], got {self.lam}")
        if self.EMT < 0:
            raise AnalysisError(f"EMT must be >= 0, got {self.EMT}")


# ---------------------------------------------------------------- closed forms


@dataclass(frozen=True)
class DeliveryProbability:
    per_copy: float  # one relayed copy reaching the destination
    printed: float  # 1 - (1 - per_copy)^(L-1) * 1/(K-1)
    complement: float  # 1 - (1 - per_copy)^(L-1) * (1 - 1/(K-1))


def delivery_probability(p: AnalyticParams) -> DeliveryProbability:
    """Both readings of the multi-copy delivery probability.

    ``printed`` composes the terms exactly as the closed form is usually
    written; ``complement`` is the reading where the source's own copy misses
    the destination with probability ``1 - 1/(K-1)``.
    """
    meet = 1.0 / (p.K - 1)
    per_copy = p.lam * 1.0 * meet * meet
    miss = (1.0 - per_copy) ** (p.L - 1)
    return DeliveryProbability(per_copy, 1.0 - miss * meet, 1.0 - miss * (1.0 - meet))


def _wait_term(p: AnalyticParams) -> float:
    return (p.K - p.L) / (p.K - 1) * (p.EMT / p.L)


def delay_s_saw(p: AnalyticParams) -> float:
    """Source spray: one new carrier per meeting, then wait for direct delivery."""
    spray = sum(p.EMT / (p.K - h) for h in range(1, p.L))
    return spray + _wait_term(p)


def delay_s_tbgr(p: AnalyticParams) -> float:
    """Source spray where each meeting relays with probability ``lam``."""
    if p.lam == 0:
        raise DegenerateLambda("relaying possibility 0 gives an unbounded delay")
    spray = sum(p.EMT / (p.lam * (p.K - h)) for h in range(1, p.L))
    return spray + _wait_term(p)


def binary_depth(L: int) -> int:
    """Halving rounds needed to spread ``L`` tickets; partial last round for non-powers of two."""
    return math.ceil(math.log2(L)) if L > 1 else 0


def delay_b_tbgr(p: AnalyticParams) -> float:
    """Binary spray: round ``h`` has ``2**(h-1)`` carriers looking for fresh nodes."""
    if p.lam == 0:
        raise DegenerateLambda("relaying possibility 0 gives an unbounded delay")
    spray = 0.0
    for h in range(1, binary_depth(p.L) + 1):
        carriers = 2 ** (h - 1)
        spray += p.EMT / (p.lam * carriers * (p.K - carriers))
    return spray + _wait_term(p)


def analytic_table(p: AnalyticParams) -> str:
    prob = delivery_probability(p)
    rows = [
        ("K", p.K), ("L", p.L), ("EMT_s", p.EMT), ("lambda", p.lam),
        ("p_copy", prob.per_copy), ("p_delivery_printed", prob.printed),
        ("p_delivery_complement", prob.complement),
        ("delay_s_saw_s", delay_s_saw(p)),
    ]
    for name, fn in (("delay_s_tbgr_s", delay_s_tbgr), ("delay_b_tbgr_s", delay_b_tbgr)):
        try:
            rows.append((name, fn(p)))
        except DegenerateLambda:
            rows.append((name, math.inf))
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{k:<{width}}  {v:.6g}" if isinstance(v, float) else f"{k:<{width}}  {v}"
                     for k, v in rows) + "\n"


# ---------------------------------------------------------------- meeting times


@dataclass(frozen=True)
class EmtEstimate:
    mean: float
    stderr: float
    samples: int
    censored: int  # trials that hit max_time without a meeting; counted at max_time

    def __str__(self):
        return f"EMT {self.mean:.3f} s (stderr {self.stderr:.3f}, n={self.samples}, censored={self.censored})"


def estimate_emt(cfg: ScenarioConfig, samples: int = 200, seed: int = 0, target: str = "node",
                 warmup: float | None = None, max_time: float = 1e5) -> EmtEstimate:
    """Monte-Carlo mean first-meeting time under the config's random-waypoint model.

    ``target="node"`` times two independent walkers; ``target="destination"``
    times one walker against the scenario's first destination (area centre by
    default). Walkers move for ``warmup`` seconds (default the config's warm-up)
    before the clock starts. All trials run side by side in one fleet.
    """
    if cfg.mobility != "rwp":
        raise AnalysisError("meeting-time estimation needs random-waypoint mobility")
    if samples < 1:
        raise AnalysisError("samples must be >= 1")
    if target not in ("node", "destination"):
        raise AnalysisError("target is 'node' or 'destination'")
    model = RwpModel((cfg.area_width, cfg.area_height), (cfg.speed_min, cfg.speed_max), (cfg.wait_min, cfg.wait_max))
    per_trial = 2 if target == "node" else 1
    rngs = [random.Random(f"emt/{seed}/{k}") for k in range(samples * per_trial)]
    fleet = Fleet([model] * len(rngs), rngs)
    dt = cfg.slot_duration
    warm = cfg.warmup if warmup is None else warmup
    for _ in range(int(round(warm / dt))):
        fleet.step(dt)

    if target == "destination":
        dest = np.array(cfg.destinations[0] if cfg.destinations else (cfg.area_width / 2, cfg.area_height / 2))
    r2 = cfg.range * cfg.range

    def in_contact():
        if target == "node":
            d = fleet.positions[0::2] - fleet.positions[1::2]
        else:
            d = fleet.positions - dest
        return np.einsum("ij,ij->i", d, d) <= r2

    met = np.full(samples, np.nan)
    met[in_contact()] = 0.0
    t = 0.0
    while np.isnan(met).any() and t < max_time - 1e-9:
        fleet.step(dt)
        t = round(t + dt, 9)
        hit = np.isnan(met) & in_contact()
        met[hit] = t
    censored = int(np.isnan(met).sum())
    met[np.isnan(met)] = max_time
    stderr = float(met.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.nan
    return EmtEstimate(float(met.mean()), stderr, samples, censored)


# ---------------------------------------------------------------- trend tests


CONFIRMED = "confirmed"
NOT_SEPARATED = "not separated"
CONTRADICTED = "contradicted"


HIGHER = "higher"
LOWER = "lower"


@dataclass(frozen=True)
class PairedComparison:
    better: str  # scheme predicted to win
    worse: str
    metric: str
    mean_diff: float  # mean advantage of better over worse, positive when the prediction holds
    ci_low: float
    ci_high: float
    n: int
    direction: str = HIGHER  # whether winning means a higher or a lower value

    @property
    def verdict(self) -> str:
        if self.ci_low > 0:
            return CONFIRMED
        if self.ci_high < 0:
            return CONTRADICTED
        return NOT_SEPARATED


def mean_ci(values, level: float = 0.95) -> tuple[float, float, float]:
    """Mean and two-sided Student-t confidence interval."""
    x = np.asarray(values, dtype=float)
    if len(x) < 2:
        raise InsufficientRuns("a confidence interval needs at least 2 runs")
    m = float(x.mean())
    half = float(stats.t.ppf(0.5 + level / 2, len(x) - 1) * x.std(ddof=1) / math.sqrt(len(x)))
    return m, m - half, m + half


def paired_compare(better, worse, metric: str = "", names=("a", "b"), direction: str = HIGHER,
                   level: float = 0.95, min_runs: int = 5) -> PairedComparison:
    """Paired comparison predicting ``better`` beats ``worse`` sample by sample."""
    if direction not in (HIGHER, LOWER):
        raise AnalysisError(f"direction is {HIGHER!r} or {LOWER!r}")
    a = np.asarray(better, dtype=float)
    b = np.asarray(worse, dtype=float)
    if a.shape != b.shape:
        raise AnalysisError("paired samples must have equal length")
    if len(a) < min_runs:
        raise InsufficientRuns(f"need at least {min_runs} paired runs, got {len(a)}")
    diff = a - b if direction == HIGHER else b - a
    if np.all(diff == diff[0]):
        m = float(diff[0])
        return PairedComparison(names[0], names[1], metric, m, m, m, len(a), direction)
    m, lo, hi = mean_ci(diff, level)
    return PairedComparison(names[0], names[1], metric, m, lo, hi, len(a), direction)


@dataclass
class TrendReport:
    """Per-scheme means with CIs plus predicted pairwise orderings."""

    summaries: dict = field(default_factory=dict)  # (scheme, metric) -> (mean, lo, hi, n)
    comparisons: list = field(default_factory=list)

    def comparison(self, better: str, worse: str, metric: str) -> PairedComparison:
        for c in self.comparisons:
            if (c.better, c.worse, c.metric) == (better, worse, metric):
                return c
        raise KeyError((better, worse, metric))

    def verdict(self, better: str, worse: str, metric: str) -> str:
        return self.comparison(better, worse, metric).verdict

    def text(self) -> str:
        lines = [f"{'scheme':<10} {'metric':<16} {'mean':>12} {'ci_low':>12} {'ci_high':>12} {'n':>4}"]
        for (scheme, metric), (m, lo, hi, n) in sorted(self.summaries.items()):
            lines.append(f"{scheme:<10} {metric:<16} {m:>12.6g} {lo:>12.6g} {hi:>12.6g} {n:>4}")
        if self.comparisons:
            lines.append("")
            lines.append(f"{'prediction':<34} {'mean_diff':>12} {'ci_low':>12} {'ci_high':>12}  verdict")
            for c in self.comparisons:
                op = ">" if c.direction == HIGHER else "<"
                pred = f"{c.metric}: {c.better} {op} {c.worse}"
                lines.append(f"{pred:<34} {c.mean_diff:>12.6g} {c.ci_low:>12.6g} {c.ci_high:>12.6g}  {c.verdict}")
        return "\n".join(lines) + "\n"


def trend_test(runs: dict, predictions=(), min_runs: int = 5) -> TrendReport:
    """Summaries and paired verdicts.

    ``runs`` maps scheme -> metric -> list of per-seed values, all lists in the
    same seed order. ``predictions`` holds ``(better, worse, metric)`` or
    ``(better, worse, metric, direction)``; direction defaults to higher. Seeds
    where either side is undefined (None) are dropped from that comparison.
    """
    report = TrendReport()
    for scheme, metrics in runs.items():
        for metric, values in metrics.items():
            vals = [v for v in values if v is not None]
            if len(vals) >= 2:
                m, lo, hi = mean_ci(vals)
                report.summaries[(scheme, metric)] = (m, lo, hi, len(vals))
    for pred in predictions:
        better, worse, metric = pred[:3]
        direction = pred[3] if len(pred) > 3 else HIGHER
        a, b = runs[better][metric], runs[worse][metric]
        pairs = [(x, y) for x, y in zip(a, b) if x is not None and y is not None]
        report.comparisons.append(paired_compare([p[0] for p in pairs], [p[1] for p in pairs], metric,
                                                 (better, worse), direction, min_runs=min_runs))
    return report
