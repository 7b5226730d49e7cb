"""How a single Bellman target is assembled from Brownian increments.

Uses the exact solution in place of the network, so the sampled target is an
unbiased estimate of u(x) up to the exit-detection error, and shows how that
error grows as the anchor point approaches the curved boundary.
"""
import numpy as np

from dflm import problems
from dflm.bellman import sample_targets

problem = problems.laplace("u1")
rng = np.random.default_rng(0)
for d in (0.3, 0.1, 0.03, 0.01):
    x = np.array([[(1 - d) * np.cos(np.pi / 12), (1 - d) * np.sin(np.pi / 12)]])
    batch = sample_targets(problem.exact, np.repeat(x, 20_000, axis=0), problem, 5e-4, 10, rng)
    bias = batch.targets.mean() - problem.exact(x)[0]
    se = batch.targets.std() / np.sqrt(len(batch.targets))
    print(f"distance {d:5.2f} from the arc: target - u = {bias:+.2e} (+/- {se:.1e})")
