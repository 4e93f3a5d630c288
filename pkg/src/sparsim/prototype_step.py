"""Gradient of the objective with respect to one prototype, and the update.

Moving a prototype changes the objective both directly (through its
similarity column) and indirectly (the optimal coefficients and bias
shift with it).  The indirect part comes from differentiating the ridge
normal equations, reusing the solver's factorization.  A decaying
repulsion term keeps prototypes from collapsing onto each other.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import ridge
from . import similarity as sim
from .datatypes import Dataset, SparseModel, TrainConfig, resolve_box
from .errors import NonFiniteUpdateError, SimilarityEvalError, StaleCoefficientsError

# Coefficients older than this (normal-equation residual) violate the
# call-after-coefficient-step contract.
STALE_TOL = 1e-6


@dataclass(frozen=True)
class PrototypeGradient:
    """Total derivative for one prototype, with its diagnostic parts.

    ``grad`` equals ``direct + coef_response + penalty`` exactly; the
    coefficient-response part is analytically zero at an exact
    coefficient solve and stays at solver-noise level in practice.
    """

    grad: np.ndarray
    direct: np.ndarray
    coef_response: np.ndarray
    penalty: np.ndarray


def _check_fresh(system, beta, bias):
    coef = np.concatenate([beta, [bias]])
    residual = np.max(np.abs(system.matrix @ coef - system.rhs))
    if residual > STALE_TOL * max(1.0, np.max(np.abs(system.rhs))):
        raise StaleCoefficientsError(
            f"coefficients are stale: normal-equation residual {residual:.3e}"
        )


def _data_gradient(S, system, data, spec, protos, beta, bias, j, lam, grad_mode):
    """Direct and coefficient-response parts, given the current similarity
    matrix and the assembled ridge system for it."""
    m, d = protos.shape
    resid = S @ beta + bias - data.targets
    D = sim.grad_z_matrix(spec, data.features, protos[j], grad_mode)
    if not np.all(np.isfinite(D)):
        raise SimilarityEvalError(f"non-finite similarity gradient for prototype {j}")
    w = data.weights * resid
    beta_j = beta[j]
    direct = 2.0 * beta_j * (w @ D)

    # Sensitivity of (coefficients, bias) to the prototype, from the
    # differentiated normal equations: -M^{-1} (beta_j [S'; 1'] + [V'; 0']) U D.
    UD = data.weights[:, None] * D
    T = np.empty((m + 1, d))
    T[:m] = beta_j * (S.T @ UD)
    T[j] += w @ D
    T[m] = beta_j * UD.sum(axis=0)
    sens = -ridge.solve_against(system, T)
    dcoef, dbias = sens[:m], sens[m]
    coef_response = 2.0 * (w @ S) @ dcoef + 2.0 * w.sum() * dbias + 2.0 * lam * (beta @ dcoef)
    return direct, coef_response


def _penalty(protos, spec, j, t, decay_power, grad_mode):
    if t < 1:
        raise ValueError(f"iteration count must be >= 1, got {t}")
    if protos.shape[0] == 1:
        return np.zeros(protos.shape[1])
    others = np.delete(protos, j, axis=0)
    grads = sim.grad_z_matrix(spec, others, protos[j], grad_mode)
    return float(t) ** (-decay_power) * grads.sum(axis=0)


def total_gradient(
    data: Dataset,
    model: SparseModel,
    j: int,
    lam: float,
    grad_mode: str = "analytic",
    penalty_t: int = None,
    penalty_decay: float = 2.0,
) -> PrototypeGradient:
    """Derivative of the full objective with respect to prototype j.

    Requires coefficients that currently solve the ridge system for the
    model's prototypes (i.e. call this right after a coefficient step).
    When ``penalty_t`` is given, the separation penalty at that iteration
    count is folded into the returned gradient as its penalty part.
    """
    if not 0 <= j < model.m:
        raise ValueError(f"prototype index {j} out of range for m={model.m}")
    S = sim.sim_matrix(model.similarity, data.features, model.prototypes).values
    system = ridge.assemble(S, data.weights, data.targets, lam)
    _check_fresh(system, model.beta, model.bias)
    direct, coef_response = _data_gradient(
        S, system, data, model.similarity, model.prototypes, model.beta, model.bias, j, lam, grad_mode
    )
    if penalty_t is not None:
        penalty = _penalty(model.prototypes, model.similarity, j, penalty_t, penalty_decay, grad_mode)
    else:
        penalty = np.zeros(model.dim)
    return PrototypeGradient(
        grad=direct + coef_response + penalty,
        direct=direct,
        coef_response=coef_response,
        penalty=penalty,
    )


def penalty_gradient(
    model: SparseModel, j: int, t: int, decay_power: float = 2.0, grad_mode: str = "analytic"
) -> np.ndarray:
    """Decayed gradient of prototype j's summed similarity to the others.

    Returns t^(-decay_power) * sum_{k != j} ds(z_k, z_j)/dz_j, which the
    update subtracts, pushing z_j away from nearby prototypes.  Zero for
    single-prototype models and for exactly coincident prototypes (the
    RBF gradient vanishes at zero distance; see step_prototype for the
    jitter that breaks such ties).
    """
    if not 0 <= j < model.m:
        raise ValueError(f"prototype index {j} out of range for m={model.m}")
    return _penalty(model.prototypes, model.similarity, j, t, decay_power, grad_mode)


def _update_prototype(protos, beta, bias, spec, j, data, config, t, S, system, box):
    """New position for prototype j given cached similarities and system."""
    if t < 1:
        raise ValueError(f"iteration count must be >= 1, got {t}")
    direct, coef_response = _data_gradient(
        S, system, data, spec, protos, beta, bias, j, config.lam, config.grad_mode
    )
    grad = direct + coef_response
    if config.penalty_enabled:
        penalty = _penalty(protos, spec, j, t, config.penalty_decay_power, config.grad_mode)
    else:
        penalty = 0.0
    z_old = protos[j]
    z_new = z_old - config.eta * grad - penalty
    if not np.all(np.isfinite(z_new)):
        z_new = z_old - (config.eta / 2.0) * grad - penalty
        if not np.all(np.isfinite(z_new)):
            raise NonFiniteUpdateError(
                f"update of prototype {j} stayed non-finite after halving the step"
            )
    if box is not None:
        z_new = np.clip(z_new, box[:, 0], box[:, 1])

    # Coincident prototypes feel no repulsion (the similarity gradient is
    # zero at distance zero); break exact ties with a tiny seeded nudge.
    others = np.delete(protos, j, axis=0)
    if others.size and np.min(np.linalg.norm(others - z_new, axis=1)) < 1e-12:
        rng = np.random.default_rng([config.seed, t, j])
        direction = rng.standard_normal(protos.shape[1])
        z_new = z_new + 1e-6 * direction / np.linalg.norm(direction)
        if box is not None:
            z_new = np.clip(z_new, box[:, 0], box[:, 1])
    return z_new


def step_prototype(
    model: SparseModel, j: int, data: Dataset, config: TrainConfig, t: int
) -> SparseModel:
    """One projected gradient update of prototype j; all others unchanged.

    The data-term gradient is scaled by the step size, the separation
    penalty is applied unscaled with its built-in decay.  A non-finite
    update is retried once with half the step size.
    """
    if not 0 <= j < model.m:
        raise ValueError(f"prototype index {j} out of range for m={model.m}")
    S = sim.sim_matrix(model.similarity, data.features, model.prototypes).values
    system = ridge.assemble(S, data.weights, data.targets, config.lam)
    _check_fresh(system, model.beta, model.bias)
    z_new = _update_prototype(
        model.prototypes, model.beta, model.bias, model.similarity, j, data, config, t, S, system,
        resolve_box(config.box, data),
    )
    protos = model.prototypes.copy()
    protos[j] = z_new
    return replace(model, prototypes=protos)
