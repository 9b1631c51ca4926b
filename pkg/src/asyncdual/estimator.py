"""Scikit-learn style facade over :func:`asyncdual.runtime.run`.

``fit`` takes a :class:`~asyncdual.problem.ProblemInstance` in place of a
data matrix. Hyperparameters are the scheduler, stepsize rule, noise model
and run length, so ``get_params``/``set_params`` and ``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from asyncdual.dual import PowerDecay
from asyncdual.experiment import compute_reference
from asyncdual.monitors import monitor
from asyncdual.noise import NoNoise
from asyncdual.problem import evaluate_dual
from asyncdual.runtime import RunConfig, run
from asyncdual.scheduler import Synchronous
from asyncdual.validation import check_dual_vector, check_iterations, check_problem

__all__ = ["AsyncDualDecomposition"]


class AsyncDualDecomposition(BaseEstimator):
    """Asynchronous block supergradient ascent on the dual of a network problem.

    Parameters
    ----------
    scheduler : scheduler spec, default ``Synchronous()``
    stepsize : stepsize rule or per-edge tuple, default ``PowerDecay(0.15, 0.51)``
    global_clock : bool, all blocks share one stepsize that advances every step
    noise : noise spec, default ``NoNoise()``
    n_iter : number of global steps
    random_state : run seed
    lambda0 : initial multipliers, zero when ``None``
    channels : trace channels to keep
    reference : ``"auto"`` computes a reference when one applies, ``None`` skips it

    Attributes
    ----------
    lambda_, alpha_, gamma_ : final multipliers, stepsizes and update counters
    primal_ : local minimizers at ``lambda_``
    primal_average_ : stepsize-weighted running average of the minimizers
    trace_, monitor_, reference_, n_iter_
    """

    def __init__(
        self,
        scheduler=None,
        stepsize=None,
        global_clock=False,
        noise=None,
        n_iter=10_000,
        random_state=0,
        lambda0=None,
        channels=("Q", "gap", "residual"),
        reference="auto",
    ):
        self.scheduler = scheduler
        self.stepsize = stepsize
        self.global_clock = global_clock
        self.noise = noise
        self.n_iter = n_iter
        self.random_state = random_state
        self.lambda0 = lambda0
        self.channels = channels
        self.reference = reference

    def _config(self, problem, reference) -> RunConfig:
        return RunConfig(
            problem=problem,
            scheduler=Synchronous() if self.scheduler is None else self.scheduler,
            stepsize=PowerDecay(0.15, 0.51) if self.stepsize is None else self.stepsize,
            iterations=check_iterations(self.n_iter),
            noise=NoNoise() if self.noise is None else self.noise,
            seed=int(self.random_state),
            global_clock=bool(self.global_clock),
            lambda0=None if self.lambda0 is None else check_dual_vector(problem, self.lambda0, "lambda0"),
            channels=self.channels,
            reference=reference,
        )

    def fit(self, problem, y=None, reference=None):
        """Run the method on ``problem``. ``y`` is ignored."""
        problem = check_problem(problem)
        if reference is None and self.reference == "auto":
            reference = compute_reference(problem)
        elif reference is None and self.reference not in (None, "auto"):
            reference = self.reference
        trace, state = run(self._config(problem, reference))
        self.problem_ = problem
        self.trace_ = trace
        self.lambda_ = state.lam
        self.alpha_ = state.alpha
        self.gamma_ = state.gamma
        self.n_iter_ = state.k
        self.reference_ = reference
        self.dual_value_ = float(trace.Q[-1])
        _, self.primal_ = evaluate_dual(problem, state.lam)
        self.primal_average_ = trace.primal_average
        self.monitor_ = monitor(trace)
        return self

    def predict(self, problem=None):
        """Local minimizers at the fitted multipliers (on ``problem`` if given)."""
        check_is_fitted(self, "lambda_")
        if problem is None:
            return self.primal_.copy()
        problem = check_problem(problem)
        return evaluate_dual(problem, check_dual_vector(problem, self.lambda_))[1]

    def score(self, problem=None, y=None):
        """Dual value at the fitted multipliers; larger is better."""
        check_is_fitted(self, "lambda_")
        if problem is None:
            return self.dual_value_
        problem = check_problem(problem)
        return evaluate_dual(problem, check_dual_vector(problem, self.lambda_))[0]

    def dual_gap(self) -> float:
        """``Q* - Q(lambda_)``; needs a reference."""
        check_is_fitted(self, "lambda_")
        if self.reference_ is None:
            raise ValueError("no reference available for this problem")
        return float(self.reference_.Q_star - self.dual_value_)

    def consensus_estimate(self) -> np.ndarray:
        """Primal average when any step fired, else the last minimizers."""
        check_is_fitted(self, "lambda_")
        return self.primal_.copy() if self.primal_average_ is None else self.primal_average_.copy()
