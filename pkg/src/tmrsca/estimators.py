"""scikit-learn style wrappers so the attack composes with pipelines.

Conventions: ``X`` is the power data (N x M samples, or N scalars) and ``y``
carries the (N, 16) plaintexts, since plaintexts are the side information the
attack is fitted against.

    >>> attack = make_pipeline(WindowDifference(), CPAAttack())  # doctest: +SKIP
    >>> attack.fit(ts.samples, ts.plaintexts)[-1].guessed_      # doctest: +SKIP
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_byte_index, check_plaintexts, check_selection, check_traces
from .aes_core import PowerModel, as_block
from .cpa import build_hypotheses, correlate_hypotheses, key_rank, run_cpa_per_sample
from .leakage import DEFAULT_SIGMA_EL_REL, NoiseParams, TraceSet, preset, simulate_traces


class LeakageSimulator(TransformerMixin, BaseEstimator):
    """Turns plaintexts into simulated power traces for a fixed key.

    Parameters
    ----------
    design : str or DesignConfig
        Preset name (``single``, ``tmr_ide``, ``tmr_opt``, ``tmr_dif``) or a config.
    key : bytes or str
        16-octet key, or 32 hex digits.
    sigma_el_rel : float
        Electrical noise std as a fraction of the design's nominal power.
    model : str
        Register previous-state model used to generate leakage.
    seed : int
    """

    def __init__(self, design="single", key=bytes(16), sigma_el_rel=DEFAULT_SIGMA_EL_REL,
                 model="hw", seed=1):
        self.design = design
        self.key = key
        self.sigma_el_rel = sigma_el_rel
        self.model = model
        self.seed = seed

    def fit(self, X, y=None):
        self.design_ = preset(self.design) if isinstance(self.design, str) else self.design
        self.key_ = as_block(self.key, "key")
        self.noise_ = NoiseParams(self.sigma_el_rel, PowerModel.parse(self.model), self.seed)
        check_plaintexts(X)
        return self

    def simulate(self, X) -> TraceSet:
        check_is_fitted(self, "design_")
        return simulate_traces(self.design_, self.key_, check_plaintexts(X), self.noise_)

    def transform(self, X) -> np.ndarray:
        return np.array(self.simulate(X).samples)


class WindowDifference(TransformerMixin, BaseEstimator):
    """Mean of the ``window2`` samples minus mean of the ``window1`` samples.

    Windows are half-open sample ranges. Output has a single column.
    """

    def __init__(self, window1=(0, 2), window2=(2, 4)):
        self.window1 = window1
        self.window2 = window2

    def fit(self, X, y=None):
        X = check_traces(X)
        for name, (lo, hi) in (("window1", self.window1), ("window2", self.window2)):
            if not 0 <= lo < hi <= X.shape[1]:
                raise ValueError(f"{name} {lo}:{hi} out of range for {X.shape[1]} samples")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "n_features_in_")
        X = check_traces(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} samples per trace, got {X.shape[1]}")
        (a0, a1), (b0, b1) = self.window1, self.window2
        return (X[:, b0:b1].mean(axis=1) - X[:, a0:a1].mean(axis=1))[:, None]


class CPAAttack(BaseEstimator):
    """Correlation power analysis on one key byte.

    With a single column in ``X`` the attack runs in scalar mode; with several
    columns (and ``per_sample=True``, the default for multi-column input) each
    guess is scored at its best sample.

    Attributes
    ----------
    result_ : CpaResult
    guessed_ : int
    ranking_ : ndarray of shape (256,)
    pcc_ : ndarray
    """

    def __init__(self, byte_index=0, model="hw", selection="max_signed"):
        self.byte_index = byte_index
        self.model = model
        self.selection = selection

    def fit(self, X, y):
        X = check_traces(X, min_rows=2)
        pts = check_plaintexts(y, min_rows=2)
        if X.shape[0] != pts.shape[0]:
            raise ValueError(f"X has {X.shape[0]} traces but y has {pts.shape[0]} plaintexts")
        byte_index = check_byte_index(self.byte_index)
        selection = check_selection(self.selection)
        model = PowerModel.parse(self.model)
        if X.shape[1] == 1:
            hyp = build_hypotheses(pts, byte_index, model)
            self.result_ = correlate_hypotheses(hyp, X[:, 0], selection)
        else:
            self.result_ = run_cpa_per_sample(X, pts, byte_index, model, selection)
        self.n_features_in_ = X.shape[1]
        self.guessed_ = self.result_.guessed
        self.ranking_ = self.result_.ranking
        self.pcc_ = self.result_.pcc
        return self

    def decision_function(self, X=None) -> np.ndarray:
        """Selection statistic per guess (what the ranking sorts by)."""
        check_is_fitted(self, "result_")
        return self.result_.statistic

    def rank_of(self, true_byte: int) -> int:
        check_is_fitted(self, "result_")
        return key_rank(self.result_, true_byte)
