"""Finite-difference reference for the taxis model at three growth rates.

Prints the peak population, which falls as the logistic rate increases.
"""
from dflm import oracle, problems

for r in (0.3, 8.0, 20.0):
    grid = oracle.fd_reference(problems.taxis(r=r), nx=65)
    print(f"r = {r:5.1f}: peak {grid.values.max():.4f}  "
          f"({grid.meta['picard_iterations']} Picard iterations)")
