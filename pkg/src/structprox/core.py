"""Core domain types: overlapping feature groups, two-modality datasets,
model parameters, and the flat parameter layout shared by the objective
and the solver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "VARIANTS",
    "GroupStructure",
    "Dataset",
    "ParameterSet",
    "Hyperparameters",
    "expand_overlap",
    "expand_columns",
    "flatten_interaction",
    "unflatten_interaction",
    "group_block",
    "interaction_block",
    "flat_length",
]

VARIANTS = ("multilevel", "additive", "multiplicative")


class GroupStructure:
    """Grouping of the genetic features into possibly overlapping blocks.

    Expanded coordinates concatenate one block per group, so a feature
    belonging to several groups owns one coefficient per membership.
    Within the expanded vector the block of group ``l`` occupies
    ``offsets[l] : offsets[l] + sizes[l]``.

    Parameters
    ----------
    groups : sequence of index sequences
        Original 0-based feature indices of each group.  Every group must
        be non-empty and free of internal duplicates, and every feature
        index in ``range(n_features)`` must appear in at least one group.
    n_features : int
        Number of original genetic features.
    weights : array_like, optional
        Positive per-group penalty weights.  Defaults to sqrt(group size).
    names : sequence of str, optional
        Group labels used in reports.  Defaults to ``group0000`` style.
    """

    def __init__(self, groups, n_features, weights=None, names=None):
        n_features = int(n_features)
        if n_features < 1:
            raise ValueError("n_features must be >= 1, got %d" % n_features)
        if len(groups) == 0:
            raise ValueError("at least one group is required")
        index_sets = []
        for l, grp in enumerate(groups):
            idx = np.asarray(grp, dtype=np.intp)
            if idx.ndim != 1 or idx.size == 0:
                raise ValueError("group %d is empty" % l)
            if idx.min() < 0 or idx.max() >= n_features:
                raise ValueError(
                    "group %d holds index %d outside [0, %d)"
                    % (l, idx[np.argmax((idx < 0) | (idx >= n_features))], n_features)
                )
            if np.unique(idx).size != idx.size:
                raise ValueError("group %d lists a feature index twice" % l)
            idx.setflags(write=False)
            index_sets.append(idx)

        covered = np.zeros(n_features, dtype=bool)
        for idx in index_sets:
            covered[idx] = True
        if not covered.all():
            missing = int(np.flatnonzero(~covered)[0])
            raise ValueError(
                "feature %d belongs to no group; every feature must be covered" % missing
            )

        sizes = np.array([idx.size for idx in index_sets], dtype=np.intp)
        if weights is None:
            weights = np.sqrt(sizes.astype(float))
        else:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != (len(index_sets),):
                raise ValueError(
                    "expected %d group weights, got shape %r"
                    % (len(index_sets), weights.shape)
                )
            if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
                raise ValueError("group weights must be finite and > 0")
        if names is None:
            names = tuple("group%04d" % l for l in range(len(index_sets)))
        else:
            if len(names) != len(index_sets):
                raise ValueError(
                    "expected %d group names, got %d" % (len(index_sets), len(names))
                )
            names = tuple(str(n) for n in names)

        self.groups = tuple(index_sets)
        self.n_features = n_features
        self.sizes = sizes
        self.offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.intp)
        self.expanded_size = int(sizes.sum())
        self.expansion_index = np.concatenate(index_sets)
        self.weights = weights
        self.names = names
        self.sizes.setflags(write=False)
        self.offsets.setflags(write=False)
        self.expansion_index.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def block(self, l: int) -> slice:
        """Slice of group ``l`` in expanded coordinates."""
        if not 0 <= l < self.n_groups:
            raise ValueError("group index %d outside [0, %d)" % (l, self.n_groups))
        start = int(self.offsets[l])
        return slice(start, start + int(self.sizes[l]))

    def __repr__(self) -> str:
        return "GroupStructure(n_groups=%d, n_features=%d, expanded_size=%d)" % (
            self.n_groups,
            self.n_features,
            self.expanded_size,
        )


class Dataset:
    """Paired genetic and imaging observations with binary labels.

    Feature matrices are stored as float64 with one row per sample; labels
    are 0/1 integers.  All values must be finite (missing data is rejected).
    """

    def __init__(self, genetic, imaging, labels):
        genetic = np.asarray(genetic, dtype=float)
        imaging = np.asarray(imaging, dtype=float)
        labels = np.asarray(labels)
        if genetic.ndim != 2 or imaging.ndim != 2:
            raise ValueError(
                "feature matrices must be 2-D, got genetic %r and imaging %r"
                % (genetic.shape, imaging.shape)
            )
        if labels.ndim != 1:
            raise ValueError("labels must be 1-D, got shape %r" % (labels.shape,))
        n = genetic.shape[0]
        if n < 1:
            raise ValueError("dataset needs at least one sample")
        if imaging.shape[0] != n or labels.shape[0] != n:
            raise ValueError(
                "row counts disagree: genetic %d, imaging %d, labels %d"
                % (n, imaging.shape[0], labels.shape[0])
            )
        if not np.all(np.isfinite(genetic)) or not np.all(np.isfinite(imaging)):
            raise ValueError("feature matrices contain NaN or infinite entries")
        if labels.dtype.kind not in "iub":
            if not np.all(np.isfinite(labels.astype(float))):
                raise ValueError("labels contain NaN or infinite entries")
            rounded = labels.astype(float)
            if not np.array_equal(rounded, rounded.astype(int)):
                raise ValueError("labels must be integers in {0, 1}")
            labels = rounded.astype(int)
        labels = labels.astype(np.intp)
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must take values in {0, 1}")
        genetic.setflags(write=False)
        imaging.setflags(write=False)
        labels.setflags(write=False)
        self.genetic = genetic
        self.imaging = imaging
        self.labels = labels

    @property
    def n_samples(self) -> int:
        return self.genetic.shape[0]

    @property
    def n_genetic(self) -> int:
        return self.genetic.shape[1]

    @property
    def n_imaging(self) -> int:
        return self.imaging.shape[1]

    def subset(self, rows) -> "Dataset":
        """New dataset restricted to the given row indices."""
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.genetic[rows], self.imaging[rows], self.labels[rows])

    def __repr__(self) -> str:
        return "Dataset(n_samples=%d, n_genetic=%d, n_imaging=%d)" % (
            self.n_samples,
            self.n_genetic,
            self.n_imaging,
        )


@dataclass
class ParameterSet:
    """Model parameters.

    ``interaction`` is the (n_imaging, expanded_size) matrix coupling the
    two modalities, ``imaging`` and ``genetic`` are the marginal
    coefficient vectors (genetic in expanded coordinates), and
    ``intercept`` is the scalar offset.
    """

    interaction: np.ndarray
    imaging: np.ndarray
    genetic: np.ndarray
    intercept: float

    def __post_init__(self):
        self.interaction = np.asarray(self.interaction, dtype=float)
        self.imaging = np.asarray(self.imaging, dtype=float)
        self.genetic = np.asarray(self.genetic, dtype=float)
        self.intercept = float(self.intercept)
        if self.interaction.ndim != 2:
            raise ValueError(
                "interaction must be 2-D, got shape %r" % (self.interaction.shape,)
            )
        if self.imaging.ndim != 1 or self.genetic.ndim != 1:
            raise ValueError("imaging and genetic coefficients must be 1-D")
        if self.interaction.shape != (self.imaging.size, self.genetic.size):
            raise ValueError(
                "interaction shape %r does not match imaging %d x genetic %d"
                % (self.interaction.shape, self.imaging.size, self.genetic.size)
            )

    @classmethod
    def zeros(cls, n_imaging: int, expanded_size: int) -> "ParameterSet":
        return cls(
            np.zeros((n_imaging, expanded_size)),
            np.zeros(n_imaging),
            np.zeros(expanded_size),
            0.0,
        )

    @property
    def n_imaging(self) -> int:
        return self.imaging.size

    @property
    def expanded_size(self) -> int:
        return self.genetic.size

    def flat(self) -> np.ndarray:
        """Concatenate (row-major interaction, imaging, genetic, intercept)."""
        return np.concatenate(
            [self.interaction.ravel(), self.imaging, self.genetic, [self.intercept]]
        )

    @classmethod
    def from_flat(cls, w, n_imaging: int, expanded_size: int) -> "ParameterSet":
        w = np.asarray(w, dtype=float)
        expected = flat_length(n_imaging, expanded_size)
        if w.shape != (expected,):
            raise ValueError(
                "flat vector has length %d, expected %d" % (w.size, expected)
            )
        cut1 = n_imaging * expanded_size
        cut2 = cut1 + n_imaging
        cut3 = cut2 + expanded_size
        return cls(
            w[:cut1].reshape(n_imaging, expanded_size).copy(),
            w[cut1:cut2].copy(),
            w[cut2:cut3].copy(),
            float(w[cut3]),
        )

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            self.interaction.copy(),
            self.imaging.copy(),
            self.genetic.copy(),
            self.intercept,
        )


@dataclass
class Hyperparameters:
    """Penalty strengths and solver settings.

    ``lambda_interaction`` and ``lambda_genetic`` weight the group norms of
    the interaction rows and the genetic coefficients; ``lambda_imaging``
    weights the squared norm of the imaging coefficients.  ``variant``
    selects which parameter blocks are active: "multilevel" keeps all,
    "additive" pins the interaction matrix at zero, "multiplicative" pins
    the marginal imaging/genetic coefficients at zero.
    """

    lambda_interaction: float
    lambda_imaging: float
    lambda_genetic: float
    variant: str = "multilevel"
    backtrack_factor: float = 0.8
    step_init: float = 1.0
    tol: float = 1e-5
    max_iters: int = 10000

    def __post_init__(self):
        for name in ("lambda_interaction", "lambda_imaging", "lambda_genetic"):
            value = float(getattr(self, name))
            setattr(self, name, value)
            if not np.isfinite(value) or value <= 0:
                raise ValueError("%s must be finite and > 0, got %r" % (name, value))
        if self.variant not in VARIANTS:
            raise ValueError(
                "variant must be one of %r, got %r" % (VARIANTS, self.variant)
            )
        self.backtrack_factor = float(self.backtrack_factor)
        if not 0 < self.backtrack_factor < 1:
            raise ValueError(
                "backtrack_factor must lie in (0, 1), got %r" % self.backtrack_factor
            )
        self.step_init = float(self.step_init)
        if self.step_init <= 0:
            raise ValueError("step_init must be > 0, got %r" % self.step_init)
        self.tol = float(self.tol)
        if self.tol <= 0:
            raise ValueError("tol must be > 0, got %r" % self.tol)
        self.max_iters = int(self.max_iters)
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1, got %r" % self.max_iters)


def expand_overlap(x, gs: GroupStructure) -> np.ndarray:
    """Map a vector from original to expanded coordinates.

    The result concatenates ``x[g]`` for ``g`` in each group in turn, so a
    feature shared by several groups is copied once per membership.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (gs.n_features,):
        raise ValueError(
            "expected a vector of length %d, got shape %r" % (gs.n_features, x.shape)
        )
    return x[gs.expansion_index]


def expand_columns(X, gs: GroupStructure) -> np.ndarray:
    """Column-wise overlap expansion of a (n_samples, n_features) matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != gs.n_features:
        raise ValueError(
            "expected a matrix with %d columns, got shape %r" % (gs.n_features, X.shape)
        )
    return X[:, gs.expansion_index]


def flatten_interaction(W) -> np.ndarray:
    """Row-major flattening: entry (i, g) lands at position i * n_cols + g."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError("expected a matrix, got shape %r" % (W.shape,))
    return W.ravel(order="C").copy()


def unflatten_interaction(v, n_rows: int, n_cols: int) -> np.ndarray:
    """Inverse of :func:`flatten_interaction` for the given shape."""
    v = np.asarray(v, dtype=float)
    if v.shape != (n_rows * n_cols,):
        raise ValueError(
            "flat vector has length %d, expected %d" % (v.size, n_rows * n_cols)
        )
    return v.reshape(n_rows, n_cols).copy()


def group_block(v, gs: GroupStructure, l: int) -> np.ndarray:
    """View of group ``l`` inside an expanded coefficient vector."""
    v = np.asarray(v)
    if v.shape != (gs.expanded_size,):
        raise ValueError(
            "expected an expanded vector of length %d, got shape %r"
            % (gs.expanded_size, v.shape)
        )
    return v[gs.block(l)]


def interaction_block(W, gs: GroupStructure, i: int, l: int) -> np.ndarray:
    """View of row ``i``, group ``l`` inside an interaction matrix."""
    W = np.asarray(W)
    if W.ndim != 2 or W.shape[1] != gs.expanded_size:
        raise ValueError(
            "expected a matrix with %d columns, got shape %r"
            % (gs.expanded_size, W.shape)
        )
    if not 0 <= i < W.shape[0]:
        raise ValueError("row index %d outside [0, %d)" % (i, W.shape[0]))
    return W[i, gs.block(l)]


def flat_length(n_imaging: int, expanded_size: int) -> int:
    """Length of the flat parameter vector for the given dimensions."""
    return n_imaging * expanded_size + n_imaging + expanded_size + 1
