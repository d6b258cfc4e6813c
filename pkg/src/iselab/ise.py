"""Monte Carlo estimation of the no-spectrum-in-window probability, and
the finite-volume counting-function diagnostic.

Trials are pure functions of (master seed, L index, trial index), so the
estimate is byte-identical no matter how trials are distributed over
worker processes.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from . import rng
from .eigensolve import (DENSE_CUTOFF, TOL_EIG, TOL_GAP, min_eig_above,
                         start_vector,
                         smallest_eigs)
from .errors import GapNotFoundError, IselabError, ScaleWindowError, SolverError
from .events import (EventSpec, build_ledger, event_A_indicator,
                     select_scale, wilson_interval)
from .grid import GridSpec
from .operators import (assemble_background, assemble_hamiltonian,
                        assemble_test_perturbation)
from .potentials import load_model, sample_configuration
from .ucp import equidistributed_from_event

from scipy.sparse.linalg import eigsh


def band_edge_of_background(grid, v0, hint=None, mode="gap", min_gap=10 * TOL_GAP):
    """Locate (a, b) for the background box operator.

    mode 'bottom' returns (-inf, smallest eigenvalue); mode 'gap' finds
    the spectral gap of H_{0,L} containing the hinted energy and returns
    its endpoints, b being the infimum of the spectrum above the gap.
    """
    h0 = assemble_background(grid, v0)
    if mode == "bottom":
        lam = smallest_eigs(h0, 1).values[0]
        return -math.inf, float(lam)
    if hint is None:
        raise ValueError("gap mode needs an energy hint")
    n = grid.num_points
    if n <= DENSE_CUTOFF:
        values = np.sort(eigh(h0.matrix.toarray(), eigvals_only=True))
        below = values[values < hint]
        above = values[values >= hint]
    else:
        k = 32
        while True:
            values, _ = eigsh(h0.matrix, k=k, sigma=hint, which="LM",
                              v0=start_vector(n))
            values = np.sort(values)
            below = values[values < hint]
            above = values[values >= hint]
            if (below.size and above.size) or k >= min(n - 1, 512):
                break
            k *= 2
    if below.size == 0 or above.size == 0:
        raise GapNotFoundError(f"hint {hint} is outside the computed spectrum")
    a, b = float(below[-1]), float(above[0])
    if b - a <= min_gap:
        raise GapNotFoundError(
            f"no gap wider than {min_gap:g} near {hint}: found ({a}, {b})"
        )
    return a, b


@dataclass(frozen=True)
class ExperimentPlan:
    model: dict
    L_values: tuple
    alpha: float
    q: float
    trials: int
    master_seed: int
    points_per_unit: int = 9
    boundary: str = "periodic"
    band_edge_mode: str = "gap"
    band_edge_hint: float = None
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        ls = tuple(self.L_values)
        if list(ls) != sorted(ls):
            raise ValueError("L values must be sorted ascending")
        object.__setattr__(self, "L_values", ls)

    @classmethod
    def from_json(cls, spec):
        return cls(
            model=spec["model"],
            L_values=tuple(spec["L_values"]),
            alpha=float(spec["alpha"]),
            q=float(spec["q"]),
            trials=int(spec["trials"]),
            master_seed=int(spec["seed"]),
            points_per_unit=int(spec.get("points_per_unit", 9)),
            boundary=spec.get("boundary", "periodic"),
            band_edge_mode=spec.get("band_edge", {}).get("mode", "gap"),
            band_edge_hint=spec.get("band_edge", {}).get("hint"),
            workers=int(spec.get("workers", 1)),
        )


def _grid_for(plan, L, dimension=2):
    return GridSpec(dimension=dimension, side=float(L),
                    spacing=1.0 / plan.points_per_unit, boundary=plan.boundary)


def _trial_sites(model, grid, event_spec):
    sites = set(model.sites_for(grid))
    if event_spec is not None:
        sites.update(event_spec.required_sites())
    return sorted(sites)


def run_ise_trial(seed, L, alpha, model, b, points_per_unit=9,
                  boundary="periodic", dimension=2, event_spec=None,
                  base_eigenvalue=None):
    """One trial: is the window [b, b + L^-alpha) free of spectrum?

    Returns a dict with the verdict, the located eigenvalue, a borderline
    flag (within tol_eig of the window edge), and, when the configuration
    lies in the good event, the observed lift of the test perturbation.
    """
    if isinstance(model, dict):
        model = load_model(model)
    grid = GridSpec(dimension=dimension, side=float(L),
                    spacing=1.0 / points_per_unit, boundary=boundary)
    width = float(L) ** (-alpha)
    profiles = model.profiles_for(grid)
    sites = _trial_sites(model, grid, event_spec)
    cfg = sample_configuration(seed, sites, model.disorder)
    result = {"seed": seed, "valid": True, "outcome": None, "value": None,
              "borderline": False, "event": None, "observed_lift": None}
    try:
        h_rand = assemble_hamiltonian(grid, model.background, cfg, profiles)
        value = min_eig_above(h_rand, b)
    except SolverError as exc:
        result.update(valid=False, error=str(exc))
        return result
    result["value"] = value
    if value >= b + width:
        result["outcome"] = True
    else:
        result["outcome"] = False
        result["borderline"] = value >= b + width - TOL_EIG
    if event_spec is not None:
        in_event = event_A_indicator(cfg, event_spec)
        result["event"] = in_event
        if in_event and base_eigenvalue is not None:
            eta, c = model.disorder.eta, model.coupling_floor
            try:
                _, mask = equidistributed_from_event(cfg, event_spec, profiles, grid)
                h_pert = assemble_test_perturbation(grid, model.background,
                                                    mask, eta * c)
                lam_pert = min_eig_above(h_pert, b)
                result["observed_lift"] = lam_pert - base_eigenvalue
            except (SolverError, IselabError) as exc:
                result.update(valid=False, error=str(exc))
    return result


def _trial_worker(payload):
    return run_ise_trial(**payload)


@dataclass(frozen=True)
class ISEPerL:
    L: int
    l: int
    band_edge: float
    gap_lower: float
    window_width: float
    trials: int
    valid: int
    successes: int
    borderline: int
    event_count: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    ledger: object
    trial_records: tuple = field(repr=False)

    def to_json(self, include_trials=True):
        out = {
            "L": self.L, "l": self.l, "band_edge": self.band_edge,
            "gap_lower": None if math.isinf(self.gap_lower) else self.gap_lower,
            "window_width": self.window_width,
            "trials": self.trials, "valid": self.valid,
            "successes": self.successes, "borderline": self.borderline,
            "event_count": self.event_count,
            "p_hat": self.p_hat, "ci_lo": self.ci_lo, "ci_hi": self.ci_hi,
            "ledger": None if self.ledger is None else self.ledger.to_json(),
        }
        if include_trials:
            out["trial_records"] = [dict(r) for r in self.trial_records]
        return out


@dataclass(frozen=True)
class ISEReport:
    plan: ExperimentPlan
    per_L: tuple

    def to_json(self, include_trials=True):
        return {
            "alpha": self.plan.alpha, "q": self.plan.q,
            "trials": self.plan.trials, "seed": self.plan.master_seed,
            "per_L": [p.to_json(include_trials) for p in self.per_L],
        }

    CSV_COLUMNS = ("L", "l", "window", "trials", "valid", "p_hat",
                   "ci_lo", "ci_hi", "ledger_verdict")

    def csv_rows(self):
        rows = []
        for p in self.per_L:
            rows.append([
                p.L, p.l, p.window_width, p.trials, p.valid, p.p_hat,
                p.ci_lo, p.ci_hi,
                "" if p.ledger is None else p.ledger.verdict,
            ])
        return rows


def estimate_ise_probability(plan, dimension=2):
    """Per-L Wilson estimate of the ISE probability, with bound ledgers."""
    model = load_model(plan.model)
    dist = model.disorder
    per_L = []
    for L_index, L in enumerate(plan.L_values):
        grid = _grid_for(plan, L, dimension)
        a, b = band_edge_of_background(grid, model.background,
                                       hint=plan.band_edge_hint,
                                       mode=plan.band_edge_mode)
        base = min_eig_above(assemble_background(grid, model.background), b)
        try:
            l = select_scale(L, plan.alpha)
            event_spec = EventSpec(dimension=dimension, l=l, L=int(L),
                                   eta=dist.eta, kappa=dist.kappa)
            ledger = build_ledger(dimension, int(L), plan.alpha, plan.q,
                                  dist.kappa, dist.eta, model.coupling_floor)
        except ScaleWindowError:
            l, event_spec, ledger = None, None, None
        payloads = [
            {"seed": rng.derive_seed(plan.master_seed, rng.TRIAL_STREAM,
                                     (L_index, t)),
             "L": L, "alpha": plan.alpha, "model": plan.model, "b": b,
             "points_per_unit": plan.points_per_unit,
             "boundary": plan.boundary, "dimension": dimension,
             "event_spec": event_spec, "base_eigenvalue": base}
            for t in range(plan.trials)
        ]
        if plan.workers > 1:
            with ProcessPoolExecutor(max_workers=plan.workers) as pool:
                records = list(pool.map(_trial_worker, payloads, chunksize=4))
        else:
            records = [_trial_worker(p) for p in payloads]
        valid = [r for r in records if r["valid"]]
        if not valid:
            raise SolverError(f"all trials invalid at L={L}")
        successes = sum(1 for r in valid if r["outcome"])
        p_hat, lo, hi = wilson_interval(successes, len(valid))
        per_L.append(ISEPerL(
            L=int(L), l=l, band_edge=b, gap_lower=a,
            window_width=float(L) ** (-plan.alpha),
            trials=plan.trials, valid=len(valid), successes=successes,
            borderline=sum(1 for r in valid if r["borderline"]),
            event_count=sum(1 for r in valid if r.get("event")),
            p_hat=p_hat, ci_lo=lo, ci_hi=hi, ledger=ledger,
            trial_records=tuple(records),
        ))
    return ISEReport(plan=plan, per_L=tuple(per_L))


@dataclass(frozen=True)
class IDSRecord:
    energies: tuple
    counting: tuple          # trial-averaged N_L(E)
    double_log: tuple        # statistic or None where undefined
    reference_energy: float
    truncated: bool

    def to_json(self):
        return {"energies": list(self.energies),
                "counting": list(self.counting),
                "double_log": list(self.double_log),
                "reference_energy": self.reference_energy,
                "truncated": self.truncated}


def ids_estimate(model, L, E_grid, trials, seed, reference_energy,
                 points_per_unit=9, boundary="periodic", dimension=2,
                 max_eigenvalues=None):
    """Trial-averaged normalized counting function and its double-log slope.

    This is a diagnostic only: the slope statistic is reported where
    N(E) - N(E0) lies in (0, 1) and no limit claim is attached.
    """
    if isinstance(model, dict):
        model = load_model(model)
    E_grid = list(E_grid)
    if E_grid != sorted(E_grid):
        raise ValueError("E_grid must be sorted")
    grid = GridSpec(dimension=dimension, side=float(L),
                    spacing=1.0 / points_per_unit, boundary=boundary)
    profiles = model.profiles_for(grid)
    sites = model.sites_for(grid)
    truncated = False
    counts = np.zeros(len(E_grid))
    for t in range(trials):
        trial_seed = rng.derive_seed(seed, rng.TRIAL_STREAM, (0, t))
        cfg = sample_configuration(trial_seed, sites, model.disorder)
        h = assemble_hamiltonian(grid, model.background, cfg, profiles)
        n = grid.num_points
        if max_eigenvalues is not None and max_eigenvalues < n:
            values = np.sort(eigsh(h.matrix, k=max_eigenvalues, which="SA",
                                   v0=start_vector(n))[0])
            truncated = True
        else:
            values = np.sort(eigh(h.matrix.toarray(), eigvals_only=True))
        counts += np.searchsorted(values, E_grid, side="right")
    volume = float(L) ** dimension
    counting = counts / (trials * volume)
    n_ref = float(np.interp(reference_energy, E_grid, counting)) \
        if E_grid else 0.0
    # use the counting value at the reference energy itself when sampled
    ref_count = None
    for e, c in zip(E_grid, counting):
        if abs(e - reference_energy) < 1e-12:
            ref_count = c
    if ref_count is None:
        ref_count = n_ref
    stats = []
    for e, c in zip(E_grid, counting):
        diff = c - ref_count
        de = e - reference_energy
        if 0.0 < diff < 1.0 and de > 0 and de != 1.0:
            stats.append(math.log(abs(math.log(diff))) / math.log(de))
        else:
            stats.append(None)
    if np.any(np.diff(counting) < -1e-12):
        raise IselabError("counting function must be nondecreasing")
    return IDSRecord(energies=tuple(float(e) for e in E_grid),
                     counting=tuple(float(c) for c in counting),
                     double_log=tuple(stats),
                     reference_energy=reference_energy, truncated=truncated)
