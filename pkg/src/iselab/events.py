"""Threshold sets, the good-configuration event, scales and bound ledgers.

Everything here mirrors the union-bound chain that turns the per-cell
large-deviation estimate (1-kappa)^(l^d) into a probability bound of the
form 1 - L^(-q), together with the scale window that trades that bound
against the exp(-l^(7/5)) eigenvalue lift.  All smallness is tracked in
log space: the exponents involved underflow doubles almost immediately.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ScaleWindowError, SearchBudgetError
from .grid import decompose_cells


@dataclass(frozen=True)
class EquidistributedSequence:
    """Ball centers y_j with B_delta(y_j) inside the cell Lambda_l(j)."""

    cell_side: float
    radius: float
    points: dict = field(repr=False)  # cell center -> y_j

    def __post_init__(self):
        if not 0 < self.radius < self.cell_side / 2.0:
            raise ValueError("radius must lie in (0, l/2)")
        for j, y in self.points.items():
            off = max(abs(a - b) for a, b in zip(y, j))
            if off + self.radius >= self.cell_side / 2.0:
                raise ValueError(f"ball at {y} leaves its cell around {j}")


@dataclass(frozen=True)
class EventSpec:
    """Parameters of the event 'every cell in the doubled box is hit'."""

    dimension: int
    l: int
    L: int
    eta: float
    kappa: float

    def __post_init__(self):
        if self.l % 2 != 1 or self.l < 1:
            raise ValueError("l must be an odd positive integer")
        if self.l > self.L:
            raise ValueError("need l <= L")

    def cells(self):
        return decompose_cells(self.dimension, self.L, self.l, window="2L")

    def required_sites(self):
        """All lattice sites appearing in some cell of the doubled box."""
        cells = self.cells()
        sites = []
        for center in cells.centers:
            sites.extend(cells.lattice_points(center))
        return sites


def threshold_set(cfg, eta):
    """J(omega): the sites whose coupling is at least eta (closed inequality)."""
    return {site for site in cfg.sites() if cfg[site] >= eta}


def event_A_indicator(cfg, spec):
    """True iff every cell of the doubled box contains a site of J(omega)."""
    cells = spec.cells()
    for center in cells.centers:
        if not any(cfg[s] >= spec.eta for s in cells.lattice_points(center)):
            return False
    return True


def cell_count(dimension, L, l):
    """M = #((lZ)^d intersect Lambda_{2L}); exact for (possibly huge) int L."""
    if isinstance(L, int) and isinstance(l, int):
        per_axis = 2 * ((2 * L - 1) // (2 * l)) + 1
    else:
        per_axis = len(decompose_cells(dimension, L, l).centers) ** (1.0 / dimension)
        per_axis = int(round(per_axis))
    return per_axis ** dimension


def _cell_failure_log(l, d, kappa):
    """ln of the per-cell failure probability (1-kappa)^(l^d)."""
    if kappa >= 1.0:
        return -math.inf
    return (l ** d) * math.log1p(-kappa)


def exact_event_probability(spec):
    """P[A] = (1 - (1-kappa)^(l^d))^M, exact for i.i.d. exact-mass sites.

    Disjoint cells contain disjoint site sets, so the per-cell events are
    independent and the product formula is exact, not a bound.
    """
    if not 0 < spec.kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    log_p = exact_event_log_probability(spec)
    return math.exp(log_p)


def _log_minus_log_p(spec):
    """ln(-ln P[A]) = ln M + ln(-ln(1 - (1-kappa)^{l^d})), or -inf.

    Working with the log of the magnitude keeps the huge-integer cell
    count M out of float arithmetic entirely.
    """
    a = _cell_failure_log(spec.l, spec.dimension, spec.kappa)
    if a == -math.inf:
        return -math.inf
    log_m = _log_int(cell_count(spec.dimension, spec.L, spec.l))
    if a < -700:
        # -ln(1 - e^a) = e^a to double precision
        return log_m + a
    return log_m + math.log(-math.log1p(-math.exp(a)))


def exact_event_log_probability(spec):
    z = _log_minus_log_p(spec)
    if z == -math.inf:
        return 0.0
    if z > 709.0:   # P[A] underflows to exactly 0
        return -math.inf
    return -math.exp(z)


def exact_event_log_failure(spec):
    """ln(1 - P[A]), meaningful even when P[A] rounds to 1."""
    a = _cell_failure_log(spec.l, spec.dimension, spec.kappa)
    if a == -math.inf:
        return -math.inf
    log_m = _log_int(cell_count(spec.dimension, spec.L, spec.l))
    if a < -700 or log_m + a < -700:
        # 1 - (1-g)^M = M g (1 + O(M g)); the correction is far below ulp
        return log_m + a
    z = log_m + math.log(-math.log1p(-math.exp(a)))   # ln(-ln P[A])
    if z > math.log(745.0):   # P[A] ~ 0; the failure is certain
        return 0.0
    return math.log(-math.expm1(-math.exp(z)))


def union_bound_log_failure(spec):
    """ln(M * (1-kappa)^(l^d)), the union bound on 1 - P[A]."""
    a = _cell_failure_log(spec.l, spec.dimension, spec.kappa)
    if a == -math.inf:
        return -math.inf
    return _log_int(cell_count(spec.dimension, spec.L, spec.l)) + a


def _log_int(m):
    return math.log(m)


def monte_carlo_event_probability(spec, trials, seed, chunk=2048):
    """Estimate P[A] by direct simulation with exact threshold mass kappa.

    Returns (p_hat, wilson_lo, wilson_hi).  Deterministic for a fixed seed:
    trial chunks draw from counter-based streams indexed by chunk number.
    """
    cells = spec.cells()
    m = cells.cell_count
    sites_per_cell = spec.l ** spec.dimension
    hits = 0
    done = 0
    chunk_index = 0
    while done < trials:
        batch = min(chunk, trials - done)
        gen = rng.stream(seed, rng.EVENT_TRIALS, (chunk_index,))
        u = gen.random((batch, m, sites_per_cell))
        cell_ok = (u < spec.kappa).any(axis=2)
        hits += int(cell_ok.all(axis=1).sum())
        done += batch
        chunk_index += 1
    return wilson_interval(hits, trials)


def wilson_interval(successes, trials, z=1.959963984540054):
    """(p_hat, lo, hi): 95% Wilson score interval."""
    if trials <= 0:
        raise ValueError("need at least one trial")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return p, max(0.0, center - half), min(1.0, center + half)


def select_scale(L, alpha):
    """Largest odd integer l with x/2 < l <= x, where x = (alpha ln L)^(2/3)."""
    if not 0 < alpha:
        raise ValueError("alpha must be positive")
    if L < 2:
        raise ScaleWindowError(f"L={L} too small for any scale window")
    x = (alpha * math.log(L)) ** (2.0 / 3.0)
    l = int(math.floor(x))
    if l % 2 == 0:
        l -= 1
    if l < 1 or l <= x / 2.0:
        raise ScaleWindowError(
            f"no odd integer in ({x / 2.0:.6g}, {x:.6g}] for L={L}, alpha={alpha}"
        )
    return l


def lifting_bound(l, eta, c):
    """Guaranteed lift eta * c * exp(-l^(7/5)) of the lowest eigenvalue above b."""
    if l < 1:
        raise ValueError("l must be >= 1")
    return eta * c * math.exp(-float(l) ** 1.4)


@dataclass(frozen=True)
class LedgerLine:
    name: str
    lhs: float
    rhs: float
    relation: str
    holds: bool


@dataclass(frozen=True)
class BoundLedger:
    """Every inequality of the probability chain, evaluated at one (L, l)."""

    dimension: int
    L: int
    alpha: float
    q: float
    kappa: float
    eta: float
    c: float
    l: int
    lines: tuple
    quantities: dict
    verdict: bool

    def failing(self):
        return [line for line in self.lines if not line.holds]

    def to_json(self):
        return {
            "params": {
                "d": self.dimension, "L": self.L, "alpha": self.alpha,
                "q": self.q, "kappa": self.kappa, "eta": self.eta, "c": self.c,
                "l": self.l,
            },
            "lines": [
                {"name": ln.name, "lhs": ln.lhs, "rhs": ln.rhs,
                 "relation": ln.relation, "holds": ln.holds}
                for ln in self.lines
            ],
            "quantities": self.quantities,
            "verdict": self.verdict,
        }


def build_ledger(dimension, L, alpha, q, kappa, eta, c):
    """Evaluate the whole inequality chain at the selected scale.

    Verdict true means: on top of the per-cell and union bounds holding at
    the selected l, the scale-free sufficient conditions hold, so the
    chain guarantees P[A] >= 1 - L^(-q) and a lift of at least L^(-alpha).
    """
    d = dimension
    l = select_scale(L, alpha)   # raises ScaleWindowError if the window is empty
    ln_l = math.log(L)
    x = (alpha * ln_l) ** (2.0 / 3.0)
    a_cell = _cell_failure_log(l, d, kappa)
    m = cell_count(d, L, l)
    log_m = _log_int(m)
    log_two_l_d = d * (math.log(2.0) + ln_l)
    log_target = -q * ln_l

    # left side of the asymptotic sufficiency condition; +inf when kappa = 1
    if kappa >= 1.0:
        sufficient_lhs = math.inf
    else:
        sufficient_lhs = (-math.log1p(-kappa) / 2 ** d) * alpha ** (2 * d / 3.0) \
            * ln_l ** ((2 * d - 3) / 3.0)
    sufficient_rhs = (q + d) + d * math.log(2.0)

    log_eta_c = math.log(eta * c)
    lines = [
        LedgerLine("scale_window_lower", x / 2.0, float(l), "<", x / 2.0 < l),
        LedgerLine("scale_window_upper", float(l), x, "<=", l <= x),
        LedgerLine("ln_L_at_least_one", 1.0, ln_l, "<=", ln_l >= 1.0),
        LedgerLine("per_cell_failure_vs_target", a_cell,
                   -log_two_l_d + log_target, "<=",
                   a_cell <= -log_two_l_d + log_target),
        LedgerLine("sufficient_large_L", sufficient_rhs, sufficient_lhs, "<=",
                   sufficient_lhs >= sufficient_rhs),
        LedgerLine("cell_count_vs_doubled_box", log_m, log_two_l_d, "<=",
                   log_m <= log_two_l_d),
        LedgerLine("union_bound_vs_target", log_m + a_cell, log_target, "<=",
                   log_m + a_cell <= log_target),
        LedgerLine("lifting_at_selected_scale", float(l) ** 1.4,
                   log_eta_c + alpha * ln_l, "<=",
                   float(l) ** 1.4 <= log_eta_c + alpha * ln_l),
        LedgerLine("lifting_scale_free", (alpha * ln_l) ** (14.0 / 15.0),
                   log_eta_c + alpha * ln_l, "<=",
                   (alpha * ln_l) ** (14.0 / 15.0) <= log_eta_c + alpha * ln_l),
    ]
    quantities = {
        "x": x,
        "l": l,
        "log_per_cell_failure": a_cell,
        "log_cell_count": log_m,
        "cell_count": m if m < 10 ** 15 else None,
        "log_union_bound": log_m + a_cell,
        "log_target_failure": log_target,
        "log_lifting_floor": log_eta_c - float(l) ** 1.4,
        "log_target_lift": -alpha * ln_l,
    }
    verdict = all(line.holds for line in lines)
    return BoundLedger(
        dimension=d, L=L, alpha=alpha, q=q, kappa=kappa, eta=eta, c=c, l=l,
        lines=tuple(lines), quantities=quantities, verdict=verdict,
    )


def ledger_verdict(dimension, L, alpha, q, kappa, eta, c):
    try:
        return build_ledger(dimension, L, alpha, q, kappa, eta, c).verdict
    except ScaleWindowError:
        return False


def min_scale_for_probability(dimension, alpha, q, kappa, eta, c,
                              strategy="scan", max_iterations=5_000_000):
    """Smallest L with a true ledger verdict.

    'scan' walks L upward one integer at a time; 'bisect' brackets by
    doubling and then binary-searches.  Both return the exact integer.
    """
    def verdict(L):
        return ledger_verdict(dimension, L, alpha, q, kappa, eta, c)

    if strategy == "scan":
        L = 3
        for _ in range(max_iterations):
            if verdict(L):
                return L
            L += 1
        raise SearchBudgetError(f"no true verdict up to L={L}")
    if strategy == "bisect":
        hi = 3
        for _ in range(max_iterations):
            if verdict(hi):
                break
            hi *= 2
            if math.log(hi) > 10 ** 7:
                raise SearchBudgetError("doubling exceeded the log budget")
        else:
            raise SearchBudgetError("bracket not found")
        lo = max(3, hi // 2)
        while lo < hi:
            mid = (lo + hi) // 2
            if verdict(mid):
                hi = mid
            else:
                lo = mid + 1
        return hi
    raise ValueError(f"unknown strategy {strategy!r}")
