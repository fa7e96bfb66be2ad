"""Numeric kernels shared by formulations, optimizers, and the logistic benchmark.

Every kernel is written in vectorized numpy that numba can compile unchanged;
``_backend.kernel`` decides at import time whether the functions are
njit-compiled or run as plain numpy (see ``LAGRANGEKIT_BACKEND``). All inputs
are float64 arrays (or python floats for hyperparameters); callers are
responsible for dtype normalization.
"""

from __future__ import annotations

import numpy as np

from ._backend import kernel


@kernel
def lagrangian_terms(mult, violation):
    # primal term <lambda, g>, weights d(term)/d(g) = lambda
    return np.dot(mult, violation), mult.copy()


@kernel
def al_inequality_terms(violation, mult, c):
    # Powell-Hestenes-Rockafellar term per constraint:
    #   (c/2) * (max(0, g + lambda/c)^2 - (lambda/c)^2)
    shifted = violation + mult / c
    active = np.maximum(shifted, 0.0)
    primal = 0.5 * np.sum(c * (active * active - (mult / c) ** 2))
    weights = np.maximum(c * violation + mult, 0.0)
    return primal, weights


@kernel
def al_equality_terms(violation, mult, c):
    primal = np.dot(mult, violation) + 0.5 * np.sum(c * violation * violation)
    weights = mult + c * violation
    return primal, weights


@kernel
def qp_inequality_terms(violation, c):
    clipped = np.maximum(violation, 0.0)
    primal = 0.5 * np.sum(c * clipped * clipped)
    weights = c * clipped
    return primal, weights


@kernel
def qp_equality_terms(violation, c):
    primal = 0.5 * np.sum(c * violation * violation)
    weights = c * violation
    return primal, weights


@kernel
def add_weighted_rows(acc, jac, weights):
    # acc + jac^T @ weights without forming the transpose
    return acc + np.dot(weights, jac)


@kernel
def gd_step(x, grad, lr):
    return x - lr * grad


@kernel
def momentum_step(x, grad, velocity, lr, beta):
    v_new = beta * velocity + grad
    return x - lr * v_new, v_new


@kernel
def adam_step(x, grad, m, v, t, lr, beta1, beta2, eps):
    m_new = beta1 * m + (1.0 - beta1) * grad
    v_new = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m_new / (1.0 - beta1 ** t)
    v_hat = v_new / (1.0 - beta2 ** t)
    x_new = x - lr * m_hat / (np.sqrt(v_hat) + eps)
    return x_new, m_new, v_new


@kernel
def logistic_loss_grad(features, labels, w, b):
    # mean binary logistic loss with labels in {-1, +1}, stable via logaddexp
    n = features.shape[0]
    z = np.dot(features, w) + b
    margins = labels * z
    loss = np.sum(np.logaddexp(0.0, -margins)) / n
    # sigma(-margin) without overflow
    slope = np.exp(-np.logaddexp(0.0, margins))
    gz = -(labels * slope) / n
    grad_w = np.dot(gz, features)
    grad_b = np.sum(gz)
    return loss, grad_w, grad_b
