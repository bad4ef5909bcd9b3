"""scikit-learn style wrappers.

Propagators have no learned state: ``fit`` builds the grid and potential and
checks the input shape, ``transform`` maps sampled wave functions (rows of a
complex array) to their images.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .classical import potential_from_name
from .gabor import PhaseLattice, Window, stft_values
from .grid import GridSpec
from .parametrix import Subdivision, compose_values
from .reference import exact_values


def check_complex_array(X, n_features: int | None = None) -> np.ndarray:
    """Validate a 2-D finite complex array (``check_array`` rejects complex input)."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("empty input")
    X = X.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains NaN or infinity")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} samples per row, got {X.shape[1]}")
    return X


class _GridEstimator(TransformerMixin, BaseEstimator):
    def _build(self, X):
        self.grid_ = GridSpec(self.n, self.box)
        if X is not None:
            check_complex_array(X, self.grid_.n)
        self.n_features_in_ = self.grid_.n
        return self

    def _input(self, X):
        check_is_fitted(self, "grid_")
        return check_complex_array(X, self.grid_.n)


class TimeSlicingPropagator(_GridEstimator):
    """Composition of ``slices`` uniform time slices of order ``order``.

    Parameters
    ----------
    potential : str
        Built-in potential name.
    hbar : float
    s, t : float
        Start and end time.
    slices : int
    order : {0, 1}
    n : int
        Grid points.
    box : float
        Box half-width.
    """

    def __init__(self, potential="harmonic", hbar=1.0, s=0.0, t=1.0, slices=1, order=0, n=1024, box=20.0):
        self.potential = potential
        self.hbar = hbar
        self.s = s
        self.t = t
        self.slices = slices
        self.order = order
        self.n = n
        self.box = box

    def fit(self, X=None, y=None):
        if self.order not in (0, 1):
            raise ValueError("order must be 0 or 1")
        if not 0 < self.hbar <= 1:
            raise ValueError("hbar must lie in (0, 1]")
        self.potential_ = potential_from_name(self.potential)
        self.subdivision_ = Subdivision.uniform(self.s, self.t, int(self.slices))
        return self._build(X)

    def transform(self, X):
        X = self._input(X)
        return compose_values(self.potential_, self.subdivision_, self.hbar, self.order, X, self.grid_)


class ReferencePropagator(_GridEstimator):
    """Reference evolution (closed form or extrapolated splitting).

    After ``transform`` the attributes ``accuracy_`` and ``method_`` describe
    the last call.
    """

    def __init__(self, potential="harmonic", hbar=1.0, s=0.0, t=1.0, n=1024, box=20.0, tol=1e-8):
        self.potential = potential
        self.hbar = hbar
        self.s = s
        self.t = t
        self.n = n
        self.box = box
        self.tol = tol

    def fit(self, X=None, y=None):
        self.potential_ = potential_from_name(self.potential)
        return self._build(X)

    def transform(self, X):
        X = self._input(X)
        out, self.accuracy_, self.method_ = exact_values(
            self.potential_, X, self.grid_, self.hbar, self.s, self.t, self.tol
        )
        return out


class STFTTransformer(_GridEstimator):
    """Short-time Fourier transform on a lattice, flattened position-major.

    Output shape is ``(m, len(xs) * len(xis))``; ``magnitude=True`` returns
    absolute values.
    """

    def __init__(self, alpha=0.5, beta=0.5, radius=8.0, n=1024, box=20.0, magnitude=False):
        self.alpha = alpha
        self.beta = beta
        self.radius = radius
        self.n = n
        self.box = box
        self.magnitude = magnitude

    def fit(self, X=None, y=None):
        self._build(X)
        self.window_ = Window.gaussian(self.grid_)
        self.lattice_ = PhaseLattice(self.alpha, self.beta, self.radius)
        self.nodes_ = self.lattice_.nodes
        return self

    def transform(self, X):
        X = self._input(X)
        V = stft_values(X, self.window_, self.lattice_).reshape(X.shape[0], -1)
        return np.abs(V) if self.magnitude else V
