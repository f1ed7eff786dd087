#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Principal component basis for spatio-temporal fields.

Each variable's N x T matrix is reduced to P coefficient series by projecting
it onto its leading P left singular vectors, so that Z ~ Phi x + mean.

The matrix is centered across time location by location before the
decomposition. On standardized fields the centering is a no-op.
"""

import logging as log
from dataclasses import dataclass
from typing import Final, Sequence, Tuple

import numpy as np
import scipy.linalg

from esn_importance_tool.core.fields import SpatioTemporalField, TimeLabel
from esn_importance_tool.errors import ValidationError

Logger: Final[log.Logger] = log.getLogger(__name__)

# above this size the SVD is replaced by an eigendecomposition of the
# smaller Gram matrix
DirectSvdLimit: Final[int] = 2000


@dataclass(frozen=True)
class BasisDecomposition:
    """A fitted principal component basis.

    Attributes:
        - basis: N x P matrix Phi with orthonormal columns
        - coefficients: P x T coefficients of the training field
        - singular_values: all min(N, T) singular values, descending
        - column_mean: length N centering vector (mean over time per location)
        - locations: locations of the training field
        - variable_name: name of the training field's variable
    """

    basis: np.ndarray
    coefficients: np.ndarray
    singular_values: np.ndarray
    column_mean: np.ndarray
    locations: np.ndarray
    variable_name: str = ""

    @property
    def retained(self) -> int:
        return self.basis.shape[1]

    @property
    def n_locations(self) -> int:
        return self.basis.shape[0]

    def explained_variance_ratio(self) -> float:
        """Share of the centered field's sum of squares kept by the basis."""
        total = float(np.sum(self.singular_values**2))
        if total == 0.0:
            return 1.0
        return float(np.sum(self.singular_values[: self.retained] ** 2)) / total


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    largest = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[largest, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _left_singular_vectors(
    centered: np.ndarray, retained: int
) -> Tuple[np.ndarray, np.ndarray]:
    n_locations, n_times = centered.shape
    if min(n_locations, n_times) <= DirectSvdLimit:
        u, s, _ = scipy.linalg.svd(centered, full_matrices=False)
        return u[:, :retained], s

    Logger.debug(f"Using Gram eigendecomposition for a {centered.shape} matrix")
    if n_locations <= n_times:
        eigenvalues, u = scipy.linalg.eigh(centered @ centered.T)
        order = np.argsort(eigenvalues)[::-1]
        s = np.sqrt(np.clip(eigenvalues[order], 0.0, None))
        return u[:, order[:retained]], s

    eigenvalues, v = scipy.linalg.eigh(centered.T @ centered)
    order = np.argsort(eigenvalues)[::-1]
    s = np.sqrt(np.clip(eigenvalues[order], 0.0, None))
    if np.any(s[:retained] <= s[0] * np.finfo(float).eps * max(centered.shape)):
        raise ValidationError(
            f"field has rank below {retained}, retain fewer components"
        )
    return centered @ v[:, order[:retained]] / s[:retained], s


def fit_pca(field: SpatioTemporalField, retained: int) -> BasisDecomposition:
    """Fit a principal component basis with `retained` components.

    :param field: field to decompose
    :type field: SpatioTemporalField
    :param retained: number of components P, 1 <= P <= min(N, T)
    :type retained: int
    :return: the fitted basis and the field's coefficients
    :rtype: BasisDecomposition
    :raises ValidationError: if retained is out of range
    """
    limit = min(field.n_locations, field.n_times)
    if not 1 <= retained <= limit:
        raise ValidationError(
            f"retained components must be between 1 and {limit}, got {retained}"
        )
    column_mean = field.values.mean(axis=1)
    centered = field.values - column_mean[:, None]
    basis, singular_values = _left_singular_vectors(centered, retained)
    basis = _fix_signs(basis)
    coefficients = basis.T @ centered
    decomposition = BasisDecomposition(
        basis=basis,
        coefficients=coefficients,
        singular_values=singular_values,
        column_mean=column_mean,
        locations=field.locations,
        variable_name=field.variable_name,
    )
    Logger.debug(
        f"PCA of {field.variable_name or 'field'}: kept {retained} components, "
        f"{100 * decomposition.explained_variance_ratio():.1f}% of variance"
    )
    return decomposition


def project(
    decomposition: BasisDecomposition, field: SpatioTemporalField
) -> np.ndarray:
    """Coefficients Phi'(values - column_mean) of a field on a fitted basis."""
    if field.n_locations != decomposition.n_locations:
        raise ValidationError(
            f"basis has {decomposition.n_locations} locations, "
            f"field has {field.n_locations}"
        )
    return decomposition.basis.T @ (field.values - decomposition.column_mean[:, None])


def reconstruct_values(
    decomposition: BasisDecomposition, coefficients: np.ndarray
) -> np.ndarray:
    """Back-transform coefficients to the spatial scale as a raw array.

    `coefficients` may be a length P vector or a P x T matrix.
    """
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape[0] != decomposition.retained:
        raise ValidationError(
            f"expected {decomposition.retained} coefficient rows, "
            f"got {coefficients.shape[0]}"
        )
    if coefficients.ndim == 1:
        return decomposition.basis @ coefficients + decomposition.column_mean
    return decomposition.basis @ coefficients + decomposition.column_mean[:, None]


def reconstruct(
    decomposition: BasisDecomposition,
    coefficients: np.ndarray,
    times: Sequence[TimeLabel] | None = None,
) -> SpatioTemporalField:
    """Back-transform a P x T coefficient matrix into a field.

    :param decomposition: fitted basis
    :type decomposition: BasisDecomposition
    :param coefficients: P x T coefficient matrix
    :type coefficients: np.ndarray
    :param times: time labels of the columns, 1..T by default
    :type times: Sequence[TimeLabel] | None
    :return: field with values Phi @ coefficients + column_mean
    :rtype: SpatioTemporalField
    """
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.ndim == 1:
        coefficients = coefficients[:, None]
    values = reconstruct_values(decomposition, coefficients)
    if times is None:
        times = range(1, values.shape[1] + 1)
    return SpatioTemporalField(
        decomposition.locations, tuple(times), values, decomposition.variable_name
    )
