"""Short interface run: circular averages of the one-hot network on either side of r = 1.

    python demos/interface_jump.py [iterations]
"""
import sys

import numpy as np

from dflm import nets, oracle, problems, train

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
dt = 2.5e-4
problem = problems.interface(dt=dt)
spec = nets.resnet(3, [20, 20, 20], "swish", "lrelu(0.1)", encoding="onehot")
cfg = train.TrainConfig(dt=dt, n_walkers=1000, n_samples=50, n_boundary=100,
                        iterations=iterations, decay_steps=iterations, decay_rate=0.01,
                        eval_every=max(1, iterations // 5), eval_angles=360, seed=2)
state = train.train(spec, problem, cfg)
net = train.final_network(state, spec, problem)
print(f"radial-profile error {state.best_error:.3e}")
print(f"learned jump at r = 1: {oracle.learned_jump(net):.4f} (exact 1)")
for r in np.linspace(0.25, 1.75, 7):
    print(f"  r = {r:.2f}: network {oracle.radial_average(net, r, 720):.4f}, "
          f"exact {float(problem.exact(np.array([[r, 0.0]]))[0]):.4f}")
