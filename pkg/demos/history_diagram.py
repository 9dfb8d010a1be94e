"""Build one backward history diagram on a small torus, colour its clusters,
and confirm that the full and empty starts agree off the red clusters."""
import numpy as np

from rcdynamics.infoperc import BLUE, GREEN, RED, assemble_clusters, build_history, check_diagram, reconstruction_check
from rcdynamics.lattice import torus
from rcdynamics.stream import RCParams, generate

prm = RCParams(0.04, 2.0)
g = torus(2, 8)
for m in (2, 5, 20):
    stream = generate(g, prm.tau(m), seed=m)
    diagram = build_history(g, np.arange(g.n_edges), stream, prm, m)
    part = assemble_clusters(diagram)
    counts = part.counts()
    ok, red_diff = reconstruction_check(g, part, stream, prm, m, g.full(), g.empty())
    violations = sum(check_diagram(diagram).values())
    print(f"m={m:2d} tau_m={prm.tau(m):6.1f}  red={counts[RED]:3d} blue={counts[BLUE]:3d} "
          f"green={counts[GREEN]:3d}  agree off red={ok}  red disagreement={red_diff}  "
          f"invariant violations={violations}")
