import math

import numpy as np
import pytest

from iselab.errors import EventViolatedError
from iselab.eigensolve import TOL_EIG, smallest_eigs
from iselab.events import EventSpec, lifting_bound
from iselab.grid import Ball, GridSpec
from iselab.operators import (IndicatorMask, build_laplacian, mask_from_balls)
from iselab.potentials import (DisorderConfiguration, indicator_profile,
                               zero_potential)
from iselab.ucp import (FitSample, UCPBoundParams, equidistributed_from_event,
                        fit_ucp_constant, lifting_experiment, mass_ratio,
                        random_subspace_vectors, ucp_theoretical_bound,
                        verify_gap_hypothesis)


@pytest.fixture
def grid6():
    return GridSpec(dimension=2, side=6.0, spacing=0.125, boundary="periodic")


class TestTheoreticalBound:
    def test_unit_exponent(self):
        # with V=0 and E=0 the exponent factor is 1, so the bound is delta/l
        p = UCPBoundParams(delta=0.4, l=1.0, v_inf=0.0, energy=0.0,
                           constant=1.0)
        assert ucp_theoretical_bound(p) == pytest.approx(0.4)

    def test_negative_energy_is_clamped(self):
        a = UCPBoundParams(0.5, 2.0, 1.0, -5.0, 1.0)
        b = UCPBoundParams(0.5, 2.0, 1.0, 0.0, 1.0)
        assert ucp_theoretical_bound(a) == ucp_theoretical_bound(b)

    def test_invalid_geometry_rejected(self):
        with pytest.raises(ValueError):
            UCPBoundParams(delta=2.0, l=3.0, v_inf=0.0, energy=0.0,
                           constant=1.0)

    def test_eventually_dominates_the_lifting_floor(self):
        # with delta/l fixed, the bound decays polynomially in the exponent
        # ~ l^{4/3} while exp(-l^{7/5}) decays faster: the bound wins for
        # large l (fixed N, V, E)
        delta_frac, n_const, v_inf, energy = 0.2, 0.5, 1.0, 4.0
        crossed = False
        for l in range(1, 60, 2):
            p = UCPBoundParams(delta_frac * l, float(l), v_inf, energy,
                               n_const)
            if ucp_theoretical_bound(p) >= math.exp(-float(l) ** 1.4):
                crossed = True
        assert crossed


class TestMassRatio:
    def test_constant_vector_counts_nodes(self, grid6):
        mask = mask_from_balls(grid6, [Ball((0.0, 0.0), 0.5)])
        phi = np.ones(grid6.num_points)
        assert mass_ratio(phi, mask) == pytest.approx(
            mask.node_indices.size / grid6.num_points)

    def test_full_mask_is_unity(self, grid6):
        mask = IndicatorMask(np.arange(grid6.num_points))
        gen = np.random.default_rng(0)
        assert mass_ratio(gen.normal(size=grid6.num_points), mask) == \
            pytest.approx(1.0)

    def test_eigenfunction_against_direct_summation(self, grid6):
        res = smallest_eigs(build_laplacian(grid6), 3)
        phi = res.vectors[:, 1]   # first excited level
        mask = mask_from_balls(grid6, [Ball((0.7, -0.7), 0.6)])
        direct = float(np.sum(phi[mask.node_indices] ** 2) / np.sum(phi ** 2))
        assert mass_ratio(phi, mask) == pytest.approx(direct, rel=1e-12)

    def test_monotone_and_additive_over_disjoint_masks(self, grid6):
        gen = np.random.default_rng(1)
        phi = gen.normal(size=grid6.num_points)
        small = mask_from_balls(grid6, [Ball((0.0, 0.0), 0.4)])
        big = mask_from_balls(grid6, [Ball((0.0, 0.0), 0.8)])
        far = mask_from_balls(grid6, [Ball((2.0, 2.0), 0.4)])
        both = mask_from_balls(grid6, [Ball((0.0, 0.0), 0.4),
                                       Ball((2.0, 2.0), 0.4)])
        assert mass_ratio(phi, big) >= mass_ratio(phi, small)
        assert mass_ratio(phi, both) == pytest.approx(
            mass_ratio(phi, small) + mass_ratio(phi, far), rel=1e-12)

    def test_zero_vector_rejected(self, grid6):
        mask = mask_from_balls(grid6, [Ball((0.0, 0.0), 0.4)])
        with pytest.raises(ValueError):
            mass_ratio(np.zeros(grid6.num_points), mask)


class TestConstantFit:
    def test_exact_inversion_at_n_two(self):
        p = UCPBoundParams(0.5, 2.0, 1.0, 3.0, 2.0)
        r = ucp_theoretical_bound(p)
        samples = [FitSample(0.5, 2.0, 1.0, 3.0, r)] * 3
        fitted, _ = fit_ucp_constant(samples)
        assert fitted == pytest.approx(2.0, rel=1e-12)

    def test_envelope_unchanged_by_satisfied_sample(self):
        base = [FitSample(0.5, 2.0, 1.0, 3.0, 0.01),
                FitSample(0.4, 2.0, 1.0, 3.0, 0.02),
                FitSample(0.5, 3.0, 1.0, 3.0, 0.05)]
        fitted, _ = fit_ucp_constant(base)
        slack = FitSample(0.5, 2.0, 1.0, 3.0, 0.5)   # far above its bound
        refit, _ = fit_ucp_constant(base + [slack])
        assert refit == pytest.approx(fitted)

    def test_degenerate_ratio_rejected(self):
        bad = [FitSample(0.5, 2.0, 0.0, 0.0, 1.0)] * 3
        with pytest.raises(ValueError):
            fit_ucp_constant(bad)

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValueError):
            fit_ucp_constant([FitSample(0.5, 2.0, 0.0, 0.0, 0.5)])

    def test_random_combinations_are_seeded_units(self):
        vectors = np.linalg.qr(
            np.random.default_rng(0).normal(size=(40, 5)))[0]
        a = random_subspace_vectors(vectors, 4, seed=9)
        b = random_subspace_vectors(vectors, 4, seed=9)
        for u, v in zip(a, b):
            assert np.array_equal(u, v)
            assert np.linalg.norm(u) == pytest.approx(1.0)


class TestEquidistributedSelection:
    def _profiles(self, sites, delta=0.45):
        return [indicator_profile(s, 1.0, delta) for s in sites]

    def test_lexicographically_smallest_per_cell(self):
        spec = EventSpec(dimension=2, l=3, L=6, eta=0.5, kappa=0.9)
        grid = GridSpec(dimension=2, side=6.0, spacing=0.125,
                        boundary="periodic")
        cfg = DisorderConfiguration(0, {s: 1.0 for s in spec.required_sites()})
        profiles = self._profiles([s for s in spec.required_sites()
                                   if max(abs(s[0]), abs(s[1])) <= 3])
        sequence, mask = equidistributed_from_event(cfg, spec, profiles, grid)
        for center, point in sequence.points.items():
            want = min(spec.cells().lattice_points(center))
            assert point == tuple(float(w) for w in want)
        assert mask.node_indices.size > 0

    def test_matches_brute_force_choice(self):
        spec = EventSpec(dimension=2, l=3, L=6, eta=0.5, kappa=0.9)
        grid = GridSpec(dimension=2, side=6.0, spacing=0.125,
                        boundary="periodic")
        gen = np.random.default_rng(3)
        for _ in range(20):
            values = {s: float(gen.random()) for s in spec.required_sites()}
            cfg = DisorderConfiguration(0, values)
            cells = spec.cells()
            if not all(any(values[s] >= spec.eta
                           for s in cells.lattice_points(c))
                       for c in cells.centers):
                continue
            profiles = self._profiles(list(spec.required_sites()))
            sequence, _ = equidistributed_from_event(cfg, spec, profiles,
                                                     grid)
            for center in cells.centers:
                want = min(s for s in cells.lattice_points(center)
                           if values[s] >= spec.eta)
                assert sequence.points[center] == \
                    tuple(float(w) for w in want)

    def test_event_violation_is_an_error(self):
        spec = EventSpec(dimension=2, l=1, L=2, eta=0.5, kappa=0.5)
        cfg = DisorderConfiguration(0, {s: 0.0 for s in spec.required_sites()})
        with pytest.raises(EventViolatedError):
            equidistributed_from_event(cfg, spec, [], None)


class TestLiftingExperiment:
    def _setup(self, eta):
        grid = GridSpec(dimension=2, side=6.0, spacing=0.125,
                        boundary="periodic")
        spec = EventSpec(dimension=2, l=3, L=6, eta=0.5, kappa=0.9)
        sites = list(spec.required_sites())
        cfg = DisorderConfiguration(0, {s: 1.0 for s in sites})
        profiles = [indicator_profile(s, 1.0, 0.45) for s in sites]
        return grid, spec, cfg, profiles

    def test_zero_eta_means_zero_lift(self):
        grid, spec, cfg, profiles = self._setup(0.0)
        rec = lifting_experiment(grid, zero_potential(), cfg, spec, profiles,
                                 b=-1.0, eta=0.0, c=1.0)
        assert abs(rec.observed_lift) <= TOL_EIG

    def test_ground_state_lift_is_positive_with_sandwich(self):
        grid, spec, cfg, profiles = self._setup(0.5)
        rec = lifting_experiment(grid, zero_potential(), cfg, spec, profiles,
                                 b=-1.0, eta=0.5, c=1.0)
        assert rec.k0 == 1
        assert rec.observed_lift > 10 * TOL_EIG
        assert rec.observed_lift <= 0.5 + TOL_EIG
        assert rec.random_eigenvalue >= rec.perturbed_eigenvalue - TOL_EIG
        assert rec.sandwich_ok
        assert rec.predicted_floor == pytest.approx(
            lifting_bound(3, 0.5, 1.0))


class TestGapHypothesis:
    def test_trivial_gap_without_perturbation(self):
        grid = GridSpec(dimension=2, side=4.0, spacing=1.0,
                        boundary="periodic")
        report = verify_gap_hypothesis(grid, zero_potential(), [],
                                       (4.1, 5.9), [0.0])
        assert report.ok

    def test_detects_background_eigenvalue_in_window(self):
        grid = GridSpec(dimension=2, side=4.0, spacing=1.0,
                        boundary="periodic")
        report = verify_gap_hypothesis(grid, zero_potential(), [],
                                       (1.0, 3.0), [0.0])
        assert not report.ok
        assert report.intrusions[0][0] == 0.0

    def test_coarse_t_grid_rejected(self):
        grid = GridSpec(dimension=2, side=4.0, spacing=1.0,
                        boundary="periodic")
        with pytest.raises(ValueError):
            verify_gap_hypothesis(grid, zero_potential(), [], (4.1, 5.9),
                                  [0.0, 0.5, 1.0])

    def test_matches_dense_scan_for_gapped_background(self, gapped_model):
        grid = GridSpec(dimension=2, side=3.0, spacing=1.0 / 9,
                        boundary="periodic")
        profiles = gapped_model.profiles_for(grid)
        t_grid = [i * 0.05 for i in range(21)]
        report = verify_gap_hypothesis(grid, gapped_model.background,
                                       profiles, (28.0, 46.0), t_grid)
        from iselab.operators import assemble_interpolated
        for t in t_grid:
            op = assemble_interpolated(grid, gapped_model.background, t,
                                       profiles)
            vals = np.linalg.eigvalsh(op.matrix.toarray())
            dense_hit = np.any((vals > 28.0 + 1e-6) & (vals < 46.0 - 1e-6))
            assert dense_hit == any(ti == t for ti, _ in report.intrusions)
