"""Background potentials, single-site profiles and disorder sampling.

A potential model bundles a periodic background V0, a lattice of
nonnegative single-site profiles u_j carrying a ball lower bound
c * indicator(B_delta(x_j)) <= u_j, and the distribution of the coupling
constants omega_j with its threshold pair (eta, kappa).
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import MissingProfileError, MissingSiteError, UnresolvableBallError

MIN_POINTS_ACROSS_BALL = 4


@dataclass(frozen=True)
class PeriodicPotential:
    """G-periodic bounded scalar field, evaluated by point sampling."""

    period: float
    func: object = field(repr=False)
    sup_bound: float
    description: str = "custom"

    def evaluate(self, points):
        points = np.asarray(points, dtype=float)
        g = self.period
        wrapped = ((points + g / 2.0) % g) - g / 2.0
        values = np.asarray(self.func(wrapped), dtype=float)
        if values.size and np.max(np.abs(values)) > self.sup_bound + 1e-12:
            raise ValueError("periodic potential exceeds its stated sup bound")
        return values


def zero_potential(period=1.0):
    return PeriodicPotential(period, lambda p: np.zeros(p.shape[0]), 0.0, "zero")


def constant_potential(value, period=1.0):
    return PeriodicPotential(
        period, lambda p, v=float(value): np.full(p.shape[0], v), abs(value),
        f"constant({value})",
    )


def separable_square_potential(amplitude, period=1.0, duty=0.5):
    """V0(x) = amplitude * sum_i s(x_i) with s a square wave of given duty.

    Separable by construction, so box spectra factor into 1D problems.
    """
    a, g, w = float(amplitude), float(period), float(duty)

    def func(points):
        frac = (points / g) % 1.0
        return a * np.sum(frac < w, axis=1).astype(float)

    return PeriodicPotential(g, func, math.inf, f"separable_square({a},{g},{w})")


def square_wave_1d(amplitude, period=1.0, duty=0.5):
    """1D factor of the separable square potential, for closed-form checks."""
    def s(x):
        frac = (np.asarray(x, dtype=float) / period) % 1.0
        return amplitude * (frac < duty).astype(float)
    return s


@dataclass(frozen=True)
class SingleSiteProfile:
    """Nonnegative bump u_j with a certified ball lower bound.

    `site` is the integer lattice index; the geometric site is G * site.
    """

    site: tuple
    func: object = field(repr=False)
    lower_bound: float           # c
    ball_radius: float           # delta
    ball_center: tuple           # x_j
    support_radius: float
    description: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "site", tuple(int(s) for s in self.site))
        object.__setattr__(self, "ball_center", tuple(float(c) for c in self.ball_center))
        if self.lower_bound <= 0 or self.ball_radius <= 0:
            raise ValueError("c and delta must be positive")

    def evaluate(self, points):
        values = np.asarray(self.func(np.asarray(points, dtype=float)), dtype=float)
        if values.size and values.min() < -1e-12:
            raise ValueError("single-site profile must be nonnegative")
        return values


def indicator_profile(site, c, delta, period=1.0):
    """u_j = c * indicator(B_delta(j*G)); the minimal admissible profile."""
    center = tuple(float(s) * period for s in site)

    def func(points):
        d2 = np.sum((points - np.asarray(center)) ** 2, axis=1)
        return c * (d2 < delta * delta)

    return SingleSiteProfile(site, func, c, delta, center, delta,
                             f"indicator(c={c},delta={delta})")


def cone_profile(site, peak, radius, c, delta, period=1.0):
    """Linear cone of height `peak`; certified bound needs peak*(1-delta/radius) >= c."""
    center = tuple(float(s) * period for s in site)

    def func(points):
        dist = np.sqrt(np.sum((points - np.asarray(center)) ** 2, axis=1))
        return peak * np.maximum(0.0, 1.0 - dist / radius)

    return SingleSiteProfile(site, func, c, delta, center, radius,
                             f"cone(peak={peak},radius={radius})")


@dataclass(frozen=True)
class DisorderDistribution:
    """Distribution of a single coupling constant, supported in [0, 1]."""

    kind: str
    eta: float
    kappa: float
    params: tuple = ()

    def __post_init__(self):
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        mass = self.exact_threshold_mass()
        if mass is not None and mass + 1e-12 < self.kappa:
            raise ValueError("P[omega >= eta] < kappa for this distribution")

    def from_uniform(self, u):
        """Deterministic map from a uniform draw to a coupling value."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform01":
            value = u
        elif self.kind == "bernoulli":
            (p,) = self.params
            value = (u < p).astype(float)
        elif self.kind == "truncated":
            values, probs = self.params
            edges = np.cumsum(probs)
            idx = np.searchsorted(edges, u, side="right")
            value = np.asarray(values, dtype=float)[np.minimum(idx, len(values) - 1)]
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if value.size and (value.min() < 0.0 or value.max() > 1.0):
            raise ValueError("sampled coupling outside [0, 1]")
        return value if value.shape else float(value)

    def exact_threshold_mass(self):
        """Exact P[omega >= eta] when available, else None."""
        if self.kind == "uniform01":
            return max(0.0, 1.0 - self.eta) if self.eta <= 1 else 0.0
        if self.kind == "bernoulli":
            (p,) = self.params
            return p if self.eta <= 1 else 0.0
        if self.kind == "truncated":
            values, probs = self.params
            return float(sum(p for v, p in zip(values, probs) if v >= self.eta))
        return None


def uniform01(eta=0.5, kappa=0.5):
    return DisorderDistribution("uniform01", eta, kappa)


def bernoulli(p, eta=0.5, kappa=None):
    return DisorderDistribution("bernoulli", eta, p if kappa is None else kappa, (p,))


def truncated(values, probs, eta, kappa=None):
    values = tuple(float(v) for v in values)
    probs = tuple(float(p) for p in probs)
    if abs(sum(probs) - 1.0) > 1e-12 or min(probs) < 0:
        raise ValueError("probs must be a probability vector")
    mass = sum(p for v, p in zip(values, probs) if v >= eta)
    return DisorderDistribution("truncated", eta, mass if kappa is None else kappa,
                                (values, probs))


@dataclass(frozen=True)
class DisorderConfiguration:
    """Realized coupling constants, regenerable from (seed, site)."""

    seed: int
    values: dict = field(repr=False)

    def __getitem__(self, site):
        try:
            return self.values[tuple(site)]
        except KeyError:
            raise MissingSiteError(f"site {site} was not sampled")

    def __contains__(self, site):
        return tuple(site) in self.values

    def sites(self):
        return self.values.keys()


def sample_configuration(seed, sites, dist):
    """Sample omega_j for every site from the counter-based stream.

    Each value depends only on (seed, site), never on enumeration order.
    """
    sites = [tuple(int(c) for c in s) for s in sites]
    if len(set(sites)) != len(sites):
        raise ValueError("sites must be distinct")
    values = {}
    for site in sites:
        u = rng.uniform_at(seed, rng.SITE_VALUES, site)
        values[site] = float(dist.from_uniform(u))
    return DisorderConfiguration(seed=int(seed), values=values)


def _accumulate(field_values, grid, profile, weight):
    if weight == 0.0:
        return
    idx = grid.nodes_within_ball(profile.ball_center, profile.support_radius)
    if idx.size == 0:
        return
    nodes = grid.nodes()[idx]
    field_values[idx] += weight * profile.evaluate(nodes)


def assemble_random_potential(cfg, profiles, grid):
    """Nodewise V_omega = sum_j omega_j u_j on the grid."""
    out = np.zeros(grid.num_points)
    for profile in profiles:
        if profile.site not in cfg:
            idx = grid.nodes_within_ball(profile.ball_center, profile.support_radius)
            if idx.size:
                raise MissingProfileError(
                    f"no coupling sampled for contributing site {profile.site}"
                )
            continue
        _accumulate(out, grid, profile, cfg[profile.site])
    if out.size and out.min() < 0:
        raise ValueError("random potential must be nonnegative")
    return out


def assemble_w(profiles, grid):
    """Nodewise envelope W = sum_j u_j (all couplings at 1)."""
    out = np.zeros(grid.num_points)
    for profile in profiles:
        _accumulate(out, grid, profile, 1.0)
    return out


@dataclass(frozen=True)
class SingleSiteReport:
    ok: bool
    ball_inside_cell: bool
    bound_holds: bool
    checked_nodes: int
    min_on_ball: float


def verify_single_site_bound(profile, grid, period=1.0):
    """Check u_j >= c on ball nodes and B_delta(x_j) inside the period cell."""
    if profile.ball_radius / grid.spacing < MIN_POINTS_ACROSS_BALL:
        raise UnresolvableBallError(
            f"delta/h = {profile.ball_radius / grid.spacing:.3g} < "
            f"{MIN_POINTS_ACROSS_BALL}"
        )
    cell_center = tuple(s * period for s in profile.site)
    offset = max(abs(x - c) for x, c in zip(profile.ball_center, cell_center))
    inside = offset + profile.ball_radius <= period / 2.0
    idx = grid.nodes_within_ball(profile.ball_center, profile.ball_radius)
    if idx.size == 0:
        raise UnresolvableBallError("ball contains no grid node")
    values = profile.evaluate(grid.nodes()[idx])
    min_on_ball = float(values.min())
    bound = min_on_ball >= profile.lower_bound - 1e-12
    return SingleSiteReport(
        ok=inside and bound,
        ball_inside_cell=inside,
        bound_holds=bound,
        checked_nodes=int(idx.size),
        min_on_ball=min_on_ball,
    )


@dataclass(frozen=True)
class PotentialModel:
    """Full model description: background, single-site lattice, disorder."""

    period: float
    background: PeriodicPotential
    site_kind: str
    site_params: tuple
    disorder: DisorderDistribution

    @property
    def coupling_floor(self):
        """The certified constant c of the single-site profiles."""
        return self.site_params[0]

    @property
    def ball_radius(self):
        return self.site_params[1]

    @property
    def support_radius(self):
        if self.site_kind == "ball_indicator":
            return self.site_params[1]
        if self.site_kind == "cone":
            return self.site_params[2]
        raise ValueError(self.site_kind)

    def profile_for(self, site):
        if self.site_kind == "ball_indicator":
            c, delta = self.site_params
            return indicator_profile(site, c, delta, self.period)
        if self.site_kind == "cone":
            c, delta, radius = self.site_params
            peak = c * radius / max(radius - delta, 1e-12)
            return cone_profile(site, peak, radius, c, delta, self.period)
        raise ValueError(self.site_kind)

    def sites_for(self, grid, margin=None):
        """Integer site indices whose support can intersect the grid box."""
        reach = self.support_radius if margin is None else margin
        g = self.period
        ranges = []
        for k in range(grid.dimension):
            lo = grid.center[k] - grid.side / 2.0 - reach
            hi = grid.center[k] + grid.side / 2.0 + reach
            ranges.append(range(math.ceil(lo / g), math.floor(hi / g) + 1))
        sites = [()]
        for r in ranges:
            sites = [s + (m,) for s in sites for m in r]
        return sites

    def profiles_for(self, grid):
        return [self.profile_for(s) for s in self.sites_for(grid)]

    def describe(self):
        return {
            "G": self.period,
            "V0": self.background.description,
            "single_site": {"kind": self.site_kind, "params": list(self.site_params)},
            "disorder": {
                "kind": self.disorder.kind,
                "eta": self.disorder.eta,
                "kappa": self.disorder.kappa,
                "params": _jsonable(self.disorder.params),
            },
        }


def _jsonable(obj):
    if isinstance(obj, tuple):
        return [_jsonable(o) for o in obj]
    return obj


def load_model(spec):
    """Build a PotentialModel from a JSON dict (or a path to one).

    Expected shape:
      {"G": g, "V0": {"kind": ..., ...}, "single_site": {"kind": ..., ...},
       "disorder": {"kind": ..., "eta": ..., "kappa": ...}}
    """
    if isinstance(spec, str):
        with open(spec) as fh:
            spec = json.load(fh)
    g = float(spec.get("G", 1.0))

    v0 = spec["V0"]
    kind = v0["kind"]
    if kind == "zero":
        background = zero_potential(g)
    elif kind == "constant":
        background = constant_potential(v0["value"], g)
    elif kind == "separable_square":
        background = separable_square_potential(
            v0["amplitude"], g, v0.get("duty", 0.5))
    else:
        raise ValueError(f"unknown V0 kind {kind!r}")

    ss = spec["single_site"]
    if ss["kind"] == "ball_indicator":
        site_params = (float(ss["c"]), float(ss["delta"]))
    elif ss["kind"] == "cone":
        site_params = (float(ss["c"]), float(ss["delta"]), float(ss["radius"]))
    else:
        raise ValueError(f"unknown single_site kind {ss['kind']!r}")

    dd = spec["disorder"]
    eta = float(dd.get("eta", 0.5))
    kappa = dd.get("kappa")
    if dd["kind"] == "uniform01":
        dist = uniform01(eta, 0.5 if kappa is None else float(kappa))
    elif dd["kind"] == "bernoulli":
        dist = bernoulli(float(dd["p"]), eta,
                         None if kappa is None else float(kappa))
    elif dd["kind"] == "truncated":
        dist = truncated(dd["values"], dd["probs"], eta,
                         None if kappa is None else float(kappa))
    else:
        raise ValueError(f"unknown disorder kind {dd['kind']!r}")

    return PotentialModel(
        period=g,
        background=background,
        site_kind=ss["kind"],
        site_params=site_params,
        disorder=dist,
    )
