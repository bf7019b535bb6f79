"""Shared helpers for building small random problem instances."""

import numpy as np

from structprox import (
    Dataset,
    GroupStructure,
    Hyperparameters,
    ParameterSet,
    SyntheticSpec,
    build_groups,
    generate,
)
from structprox.objective import Design


def tiny_groups():
    """Two overlapping groups over three features: {0,1} and {1,2}."""
    return GroupStructure([[0, 1], [1, 2]], n_features=3)


def random_instance(seed, n=12, n_imaging=3, groups=((0, 1), (1, 2)), n_features=3):
    """Raw (unstandardized) dataset, group structure, and design."""
    rng = np.random.default_rng(seed)
    gs = GroupStructure([list(g) for g in groups], n_features=n_features)
    genetic = rng.binomial(2, 0.4, size=(n, n_features)).astype(float)
    imaging = rng.normal(0.0, 1.0, size=(n, n_imaging))
    labels = rng.integers(0, 2, size=n).astype(float)
    d = Dataset(genetic, imaging, labels)
    return d, gs, Design.from_dataset(d, gs)


def random_params(seed, n_imaging, expanded, scale=1.0):
    rng = np.random.default_rng(seed)
    flat = rng.normal(0.0, scale, size=n_imaging * expanded + n_imaging + expanded + 1)
    return ParameterSet.from_flat(flat, n_imaging, expanded)


def synthetic_instance(seed, **overrides):
    """Planted synthetic instance with mild defaults for solver tests."""
    settings = dict(
        n_samples=40,
        n_imaging=3,
        n_groups=4,
        group_size=3,
        overlap=0.0,
        n_active=1,
        effect_genetic=1.0,
        effect_imaging=0.5,
        effect_interaction=0.0,
        label_noise=0.1,
        seed=seed,
    )
    settings.update(overrides)
    return generate(SyntheticSpec(**settings))


def default_hyper(**overrides):
    settings = dict(
        lambda_interaction=0.1,
        lambda_imaging=0.05,
        lambda_genetic=0.1,
    )
    settings.update(overrides)
    return Hyperparameters(**settings)
