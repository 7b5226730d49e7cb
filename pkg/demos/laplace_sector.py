"""Train a small residual network on the harmonic target u1 in the pi/6 sector.

A few thousand iterations are enough to see the relative L2 error fall below
1e-2; the full desk configuration lives in configs/laplace_u1.toml.

    python demos/laplace_sector.py [iterations]
"""
import sys

from dflm import nets, problems, train

iterations = int(sys.argv[1]) if len(sys.argv) > 1 else 3000
problem = problems.laplace("u1")
spec = nets.PRESETS["laplace_resnet"]()
cfg = train.TrainConfig(dt=5e-4, n_walkers=500, n_samples=50, n_boundary=100,
                        iterations=iterations, decay_steps=iterations, decay_rate=0.01,
                        eval_every=max(1, iterations // 10), seed=1)

state = train.train(spec, problem, cfg)
for record in state.history:
    print(f"iteration {record['iteration']:6d}  relative L2 {record['relative_l2']:.3e}")
print(f"best {state.best_error:.3e} at iteration {state.best_step}")
