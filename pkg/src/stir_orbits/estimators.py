"""Monte Carlo aggregation and the inequality check reports.

Every check reduces to an Estimate (mean, stderr, count) compared against a
closed-form or bracketed right-hand side at a 3-sigma one-sided margin.
HOLDS is claimed only against the conservative side of the bracket, so a
failed comparison is INCONCLUSIVE unless it persists against the other
side, in which case it is VIOLATED (and, for proven inequalities, a bug).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import fast
from .schedule import Schedule
from .walks import EscapeBracket, TraceWalkConfig, mean_min_return

SIGMA_LEVEL = 3.0

# Markov-inequality tilt used by the transient sublinear-tail check with
# a = escape/4; chosen by a pilot grid over {0.5, 0.6, ..., 0.95} as the
# minimiser of a*n*log(1/(1-p)) - p*(n+1)*escape at desk-scale parameters.
TAIL_MARKOV_P = 0.75

HOLDS = "HOLDS-at-3s"
VIOLATED = "VIOLATED-at-3s"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class Estimate:
    mean: float
    stderr: float
    count: int
    seed: int
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_values(cls, values, seed: int, metadata: dict | None = None) -> "Estimate":
        arr = np.asarray(values, dtype=np.float64)
        n = arr.size
        if n == 0:
            raise ValueError("no samples")
        mean = float(arr.mean())
        stderr = float(arr.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean=mean, stderr=stderr, count=n, seed=seed, metadata=metadata or {})

    def _m2(self) -> float:
        # stderr = sqrt(M2 / (n-1)) / sqrt(n)  =>  M2 = stderr^2 * n * (n-1)
        return self.stderr**2 * self.count * (self.count - 1)

    def merge(self, other: "Estimate") -> "Estimate":
        """Pooled statistics of two disjoint sample sets (Welford merge)."""
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self._m2() + other._m2() + delta * delta * self.count * other.count / n
        stderr = math.sqrt(m2 / (n - 1) / n) if n > 1 else 0.0
        meta = dict(self.metadata)
        return Estimate(mean=mean, stderr=stderr, count=n, seed=self.seed, metadata=meta)


def config_digest(payload) -> str:
    """Stable short hash of a canonicalized configuration description."""
    if isinstance(payload, dict):
        text = ";".join(f"{k}={payload[k]}" for k in sorted(payload))
    else:
        text = str(payload)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


@dataclass
class BoundReport:
    check: str
    lhs: Estimate
    rhs: float
    direction: str  # "<=" or ">=" or "=="
    verdict: str
    horizon: float
    digest: str
    detail: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {
            "check-name": self.check,
            "config-digest": self.digest,
            "n-or-t": self.horizon,
            "lhs-mean": self.lhs.mean,
            "lhs-stderr": self.lhs.stderr,
            "rhs": self.rhs,
            "verdict": self.verdict,
            "samples": self.lhs.count,
            "seed": self.lhs.seed,
        }


def _verdict_upper(lhs: Estimate, rhs_conservative: float, rhs_optimistic: float,
                   sigma: float = SIGMA_LEVEL) -> str:
    """lhs <= rhs with a bracketed rhs; conservative side decides HOLDS."""
    if lhs.mean + sigma * lhs.stderr <= rhs_conservative:
        return HOLDS
    if lhs.mean - sigma * lhs.stderr > rhs_optimistic:
        return VIOLATED
    return INCONCLUSIVE


def orbit_pgf_estimate(
    schedule: Schedule, n: int, p: float, samples: int, seed: int,
    metadata: dict | None = None,
) -> Estimate:
    """Monte Carlo E[(1-p)^|O_n|]."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if n < 0:
        raise ValueError("n must be >= 0")
    sizes = fast.orbit_sizes(schedule, n, samples, seed)
    if p == 0.0:
        values = np.ones_like(sizes, dtype=np.float64)
    elif p == 1.0:
        values = (sizes == 0).astype(np.float64)  # orbit never empty: all zeros
    else:
        values = (1.0 - p) ** sizes.astype(np.float64)
    meta = {"p": p, "n": n}
    meta.update(metadata or {})
    return Estimate.from_values(values, seed, meta)


def orbit_size_estimate(schedule: Schedule, n: int, samples: int, seed: int) -> Estimate:
    sizes = fast.orbit_sizes(schedule, n, samples, seed)
    return Estimate.from_values(sizes.astype(np.float64), seed, {"n": n})


def check_theorem_bound(
    schedule: Schedule,
    n: int,
    p: float,
    samples: int,
    escape: EscapeBracket,
    seed: int,
    digest: str = "",
) -> BoundReport:
    """E[(1-p)^|O_n|] <= exp(-p (n+1) P(T=inf)), with P bracketed.

    Whenever E[(1/2)^|O_n|] drops near 2^-(n+1) the relative Monte Carlo
    error explodes; callers keep n small enough that the trivial floor is
    resolvable at the requested sample count (the report records the floor).
    """
    lhs = orbit_pgf_estimate(schedule, n, p, samples, seed)
    rhs_cons = math.exp(-p * (n + 1) * escape.lower_conservative)
    rhs_opt = math.exp(-p * (n + 1) * escape.upper_conservative)
    verdict = _verdict_upper(lhs, rhs_cons, rhs_opt)
    return BoundReport(
        check="theorem-bound",
        lhs=lhs,
        rhs=rhs_cons,
        direction="<=",
        verdict=verdict,
        horizon=float(n),
        digest=digest,
        detail={
            "p": p,
            "escape_lower": escape.lower_conservative,
            "escape_upper": escape.upper_conservative,
            "mc_floor": (1.0 - p) ** (n + 1),
        },
    )


def check_jensen_lower(
    schedule: Schedule, n: int, samples: int, seed: int, digest: str = ""
) -> BoundReport:
    """E[(1/2)^|O_n|] >= 2^(-E|O_n|), paired on one sample set."""
    sizes = fast.orbit_sizes(schedule, n, samples, seed).astype(np.float64)
    lhs = Estimate.from_values(0.5**sizes, seed, {"n": n})
    mean_size = Estimate.from_values(sizes, seed, {"n": n})
    rhs = 2.0 ** (-mean_size.mean)
    rhs_sigma = math.log(2.0) * rhs * mean_size.stderr
    gap = lhs.mean - rhs
    sigma = lhs.stderr + rhs_sigma  # conservative for the correlated pair
    verdict = HOLDS if gap >= -SIGMA_LEVEL * sigma else VIOLATED
    return BoundReport(
        check="jensen-lower",
        lhs=lhs,
        rhs=rhs,
        direction=">=",
        verdict=verdict,
        horizon=float(n),
        digest=digest,
        detail={"mean_orbit": mean_size.mean, "rhs_sigma": rhs_sigma},
    )


def check_mean_orbit_identity(
    schedule: Schedule,
    cfg: TraceWalkConfig,
    n: int,
    samples: int,
    seed: int,
    digest: str = "",
) -> BoundReport:
    """E|O_n| equals the survival sum E[min(T, n+1)], two-sided at 3 sigma."""
    orbit = orbit_size_estimate(schedule, n, samples, seed)
    walk_mean, walk_stderr = mean_min_return(cfg, n, samples, rng_shift(seed))
    sigma = math.hypot(orbit.stderr, walk_stderr)
    diff = orbit.mean - walk_mean
    verdict = HOLDS if abs(diff) <= SIGMA_LEVEL * sigma else VIOLATED
    return BoundReport(
        check="mean-orbit-identity",
        lhs=orbit,
        rhs=walk_mean,
        direction="==",
        verdict=verdict,
        horizon=float(n),
        digest=digest,
        detail={"walk_stderr": walk_stderr, "diff": diff, "sigma": sigma},
    )


def rng_shift(seed: int) -> int:
    """Independent sub-seed for the second leg of a two-estimator check."""
    from . import rng as _rng

    return _rng.derive_key(seed, 0xD15)


def check_sublinear_tail(
    schedule: Schedule,
    n_list,
    epsilon: float,
    samples: int,
    seed: int,
    escape: EscapeBracket | None = None,
    digest: str = "",
) -> list[BoundReport]:
    """Tail reports P(|O_n| <= eps n) plus the regime-specific comparisons.

    Transient regime (escape bracket given, lower end positive): checks
    P(|O_n| < a n) <= e^(-a n) with a = escape/4, the admissible constant
    obtained from the orbit-pgf bound by a Markov-inequality tilt at
    TAIL_MARKOV_P.  Recurrent regime: reports E|O_n|/n per horizon; callers
    assert the decrease.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    reports = []
    a = None
    if escape is not None and escape.lower_conservative > 0:
        a = escape.lower_conservative / 4.0
    for n in sorted(n_list):
        sizes = fast.orbit_sizes(schedule, n, samples, seed).astype(np.float64)
        tail = Estimate.from_values(sizes <= epsilon * n, seed, {"n": n, "eps": epsilon})
        reports.append(
            BoundReport(
                check="tail-fraction",
                lhs=tail,
                rhs=math.exp(-epsilon * n),
                direction="report",
                verdict=INCONCLUSIVE,
                horizon=float(n),
                digest=digest,
                detail={"epsilon": epsilon},
            )
        )
        mean_ratio = Estimate.from_values(sizes / max(n, 1), seed, {"n": n})
        reports.append(
            BoundReport(
                check="mean-orbit-ratio",
                lhs=mean_ratio,
                rhs=float("nan"),
                direction="report",
                verdict=INCONCLUSIVE,
                horizon=float(n),
                digest=digest,
            )
        )
        if a is not None:
            below = Estimate.from_values(sizes < a * n, seed, {"n": n, "a": a})
            rhs = math.exp(-a * n)
            verdict = (
                HOLDS
                if below.mean - SIGMA_LEVEL * below.stderr <= rhs
                else VIOLATED
            )
            reports.append(
                BoundReport(
                    check="tail-markov-bound",
                    lhs=below,
                    rhs=rhs,
                    direction="<=",
                    verdict=verdict,
                    horizon=float(n),
                    digest=digest,
                    detail={"a": a, "tilt_p": TAIL_MARKOV_P},
                )
            )
    return reports


def check_continuous_corollary(
    schedule: Schedule,
    t: float,
    samples: int,
    escape: EscapeBracket,
    seed: int,
    digest: str = "",
) -> BoundReport:
    """E[(1/2)^|orbit over [0,t]|] <= exp(-ceil(t)/2 P(T=inf)), bracketed."""
    if t <= 0:
        raise ValueError("t must be positive")
    cont, disc = fast.continuous_orbit_sizes(schedule, t, samples, seed)
    values = 0.5 ** cont.astype(np.float64)
    lhs = Estimate.from_values(values, seed, {"t": t})
    exponent = math.ceil(t) / 2.0
    rhs_cons = math.exp(-exponent * escape.lower_conservative)
    rhs_opt = math.exp(-exponent * escape.upper_conservative)
    verdict = _verdict_upper(lhs, rhs_cons, rhs_opt)
    pairwise_ok = bool(np.all(cont >= disc))
    return BoundReport(
        check="continuous-bound",
        lhs=lhs,
        rhs=rhs_cons,
        direction="<=",
        verdict=verdict,
        horizon=float(t),
        digest=digest,
        detail={"contains_discrete_orbit": pairwise_ok},
    )
