"""Shipped reference experiment: a gapped checkerboard model at desk scale.

The background is a separable square wave of amplitude 40 on the unit
cell, which opens an internal spectral gap near (26.7, 46.7) already on
small boxes.  The disorder is a three-point distribution concentrated
above the coupling threshold (kappa = 0.996), so the good-configuration
event holds in a sizeable fraction of trials and the conditional
certainty check is exercised rather than vacuous.

The exponent alpha = 0.60 keeps the scale-selection window nonempty at
every box size (l = 1 throughout) and places the window width L^-alpha
inside the empirical lift distribution at L = 6 -- the hit rate there is
strictly between 0 and 1 -- while the test-perturbation lift clears the
threshold at L = 9 and L = 12 with a visible margin.
"""

import copy

from .ise import ExperimentPlan

REFERENCE_MODEL = {
    "G": 1.0,
    "V0": {"kind": "separable_square", "amplitude": 40.0},
    "single_site": {"kind": "ball_indicator", "c": 1.0, "delta": 0.45},
    "disorder": {
        "kind": "truncated",
        "values": [0.0, 0.5, 1.0],
        "probs": [0.004, 0.83, 0.166],
        "eta": 0.5,
    },
}

# Band-edge search hint: center of the manufactured gap on even boxes.
REFERENCE_GAP_HINT = 36.0

REFERENCE_L_VALUES = (6, 9, 12)
REFERENCE_ALPHA = 0.60
REFERENCE_Q = 1.0
REFERENCE_SEED = 20260824


def reference_model_spec():
    """Deep copy of the reference potential JSON."""
    return copy.deepcopy(REFERENCE_MODEL)


def reference_plan(trials=200, workers=1, master_seed=REFERENCE_SEED):
    """The shipped experiment plan: 3 box sizes, 200 trials each."""
    return ExperimentPlan(
        model=reference_model_spec(),
        L_values=REFERENCE_L_VALUES,
        alpha=REFERENCE_ALPHA,
        q=REFERENCE_Q,
        trials=trials,
        master_seed=master_seed,
        points_per_unit=9,
        boundary="periodic",
        band_edge_mode="gap",
        band_edge_hint=REFERENCE_GAP_HINT,
        workers=workers,
    )


# Scales for the lifting sweep: one ball per cell of side l, on a box
# large enough that the l = 5 decomposition is nondegenerate.
LIFTING_SCALES = (1, 3, 5)
LIFTING_BOX = 5
