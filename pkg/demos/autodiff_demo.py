"""A tour of the tape engine: plain gradients, nested gradients, and the
gradient field of a Hamiltonian.

The second example is the mechanism behind HOGN training: a loss defined
on the input-gradients of a network is itself differentiated with
respect to the network parameters.
"""

import numpy as np

from springsim import autodiff as ad
from springsim import models, physics
from springsim.models import ModelKind, SystemBatch


def main():
    # 1. a scalar gradient through a few composed primitives
    x = ad.Value(np.array([1.0, 2.0, 3.0]))
    y = ad.vsum(ad.mul(x, ad.softplus(x)))
    print("d/dx sum(x * softplus(x)) at [1, 2, 3]:")
    print(" ", ad.gradient(y, x).data)

    # 2. reverse-over-reverse: gradients of a gradient norm
    rng = np.random.default_rng(0)
    mlp = ad.init_mlp_params(rng, [2, 8, 8]).lifted()
    x0 = ad.Value(rng.uniform(-1, 1, size=(1, 2)))
    gx = ad.gradient(ad.vsum(ad.mlp_forward(mlp, x0)), x0)
    loss = ad.vsum(ad.mul(gx, gx))
    grads = ad.param_gradient(loss, mlp)
    print("\nnested gradient: d ||d MLP / d x||^2 / d W0 has shape",
          grads.weights[0].data.shape,
          f"and norm {np.linalg.norm(grads.weights[0].data):.4f}")

    # 3. Hamilton's equations from a learned (here: true) energy on the tape
    config, state = physics.sample_system(np.random.default_rng(1), 3)
    dq, dp = models.true_hamiltonian_autodiff_derivatives(config, state)
    dq_ref, dp_ref = physics.true_derivatives(config, state)
    print("\ntape-gradient Hamiltonian field vs analytic derivatives:")
    print(f"  max |dq error| = {np.max(np.abs(dq - dq_ref)):.2e}")
    print(f"  max |dp error| = {np.max(np.abs(dp - dp_ref)):.2e}")

    # the same machinery applied to a randomly initialized learned Hamiltonian
    params = models.init_model_params(np.random.default_rng(2), ModelKind.HOGN)
    f = models.hogn_derivatives(params, SystemBatch.single(config))
    dq_l, dp_l = f(ad.Value(state.q), ad.Value(state.p))
    print("\nuntrained HOGN field (just to show it runs):")
    print(f"  dq/dt row 0 = {dq_l.data[0]}")
    print(f"  dp/dt row 0 = {dp_l.data[0]}")


if __name__ == "__main__":
    main()
