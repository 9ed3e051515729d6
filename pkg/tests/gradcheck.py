"""Finite-difference gradient checking with a ReLU kink guard.

Central differences are only a valid derivative oracle where the loss is
differentiable; a parameter whose +/-eps perturbation flips the sign of any
pre-activation straddles a ReLU kink and is skipped (the analytic gradient is
the one-sided subgradient there, which no finite difference can certify).
"""

import numpy as np

from commtrace import model as md
from commtrace import training as tr


def relu_signs(model, x):
    _, cache = md.forward_batch(model, x[None])
    signs = [np.sign(cache["a0"])]
    for blk in cache["blocks"]:
        signs.append(np.sign(blk["a1"]))
        signs.append(np.sign(blk["s"]))
    return signs


def kink_safe(model, x, idx, eps):
    base = relu_signs(model, x)
    for delta in (eps, -eps):
        p = model.params.copy()
        p[idx] += delta
        probed = md.StudentModel(config=model.config, params=p)
        if any(not np.array_equal(a, b)
               for a, b in zip(base, relu_signs(probed, x))):
            return False
    return True


def central_difference(model, x, teacher, labels, alpha, idx, eps=1e-4):
    def loss_at(delta):
        p = model.params.copy()
        p[idx] += delta
        probed = md.StudentModel(config=model.config, params=p)
        return tr.distill_loss(md.forward(probed, x), teacher, labels, alpha).total
    return (loss_at(eps) - loss_at(-eps)) / (2 * eps)


def checkable_indices(model, x, rng, count, eps=1e-4):
    """``count`` random parameter indices that stay clear of ReLU kinks."""
    picked = []
    for idx in rng.permutation(len(model.params)):
        if kink_safe(model, x, int(idx), eps):
            picked.append(int(idx))
            if len(picked) == count:
                return picked
    raise AssertionError("could not find enough kink-free parameters")
