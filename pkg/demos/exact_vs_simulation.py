"""Compare the simulated chain with the exact stationary law on the 2x2 grid,
then bracket the exact distance to equilibrium between the two Monte Carlo bounds."""
import numpy as np

from rcdynamics.estimators import coupling_dt, state_snapshots, statistic_lower_dt
from rcdynamics.exact import exact_dt_all_starts, exact_measure, generator, spectral_gap, tv_distance
from rcdynamics.lattice import Graph
from rcdynamics.stream import RCParams

prm = RCParams(0.5, 2.0)
g = Graph.grid(2, 2)
mu = exact_measure(g, prm.p, prm.q)
Q = generator(g, prm.p, prm.q)
print(f"edges {g.n_edges}, states {mu.probs.size}, open marginal {mu.marginal(0):.4f}, "
      f"gap {spectral_gap(Q, mu.probs):.4f}")

states = state_snapshots(g, prm, g.full(), [50.0], 20_000, seed=1)[0]
hist = np.bincount(states, minlength=mu.probs.size) / states.size
print(f"TV(simulated, exact) with 20000 replicas: {tv_distance(hist, mu.probs):.4f}")

times = np.linspace(0.5, 4.0, 8)
exact = exact_dt_all_starts(Q, mu.probs, times)
low = statistic_lower_dt(g, prm, times, 5000, seed=2, reference=mu.open_count_law())
up = coupling_dt(g, prm, times, 5000, seed=3)
# Monte Carlo bounds carry sampling noise: compare exact against lower - ci and upper ci_hi
print(f"{'t':>5} {'lower-ci':>9} {'exact':>7} {'upper hi':>9}")
for t, a, ci, b, c in zip(times, low.lower, low.ci, exact, up.ci_hi):
    print(f"{t:5.2f} {a - ci:9.4f} {b:7.4f} {c:9.4f}")
